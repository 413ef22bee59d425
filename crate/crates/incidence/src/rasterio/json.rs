//! Intrinsics + image size as a flat JSON object:
//! `{"fx": .., "fy": .., "bx": .., "by": .., "width": .., "height": ..}`.

use incidence_core::{ImageGeometry, Intrinsics};
use serde::Serialize;
use serde_json::{Map, Value};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum JsonError {
    #[error("malformed JSON: {0}")]
    Syntax(#[from] serde_json::Error),
    #[error("expected a JSON object")]
    NotAnObject,
    #[error("missing key `{0}`")]
    MissingKey(&'static str),
    #[error("key `{0}` must be a number")]
    NotANumber(&'static str),
    #[error("key `{0}` must be a positive integer")]
    NotAnInteger(&'static str),
    #[error("invalid intrinsics: {0}")]
    Invalid(#[from] incidence_core::geometry::GeometryError),
}

#[derive(Serialize)]
struct Flat {
    fx: f64,
    fy: f64,
    bx: f64,
    by: f64,
    width: usize,
    height: usize,
}

pub fn intrinsics_value(k: &Intrinsics, g: ImageGeometry) -> Value {
    serde_json::to_value(Flat { fx: k.fx, fy: k.fy, bx: k.bx, by: k.by, width: g.width(), height: g.height() })
        .expect("plain numbers serialize")
}

pub fn intrinsics_json(k: &Intrinsics, g: ImageGeometry) -> String {
    serde_json::to_string_pretty(&intrinsics_value(k, g)).expect("plain numbers serialize")
}

pub fn parse_intrinsics_json(text: &str) -> Result<(Intrinsics, ImageGeometry), JsonError> {
    let value: Value = serde_json::from_str(text)?;
    intrinsics_from_value(&value)
}

pub fn intrinsics_from_value(value: &Value) -> Result<(Intrinsics, ImageGeometry), JsonError> {
    let obj = value.as_object().ok_or(JsonError::NotAnObject)?;
    let num = |key: &'static str| field(obj, key)?.as_f64().ok_or(JsonError::NotANumber(key));
    let int = |key: &'static str| {
        field(obj, key)?
            .as_u64()
            .and_then(|v| usize::try_from(v).ok())
            .ok_or(JsonError::NotAnInteger(key))
    };
    let k = Intrinsics::new(num("fx")?, num("fy")?, num("bx")?, num("by")?)?;
    let g = ImageGeometry::new(int("width")?, int("height")?)?;
    Ok((k, g))
}

fn field<'a>(obj: &'a Map<String, Value>, key: &'static str) -> Result<&'a Value, JsonError> {
    obj.get(key).ok_or(JsonError::MissingKey(key))
}
