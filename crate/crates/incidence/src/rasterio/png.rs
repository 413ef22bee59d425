//! 16-bit PNG export for visualization.
//!
//! Each channel is mapped affinely from `[min, max]` onto `0..=65535`; the
//! ranges go to a JSON sidecar so values can be approximately recovered.
//! This is lossy and never read back by the toolkit.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use super::format::RasterMap;

#[derive(Debug, Error)]
pub enum PngError {
    #[error(transparent)]
    Encode(#[from] png::EncodingError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChannelRange {
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PngSidecar {
    pub kind: String,
    pub width: usize,
    pub height: usize,
    /// Incident maps only: rays were unit-normalized before mapping.
    pub unit_normalized: bool,
    pub channels: Vec<ChannelRange>,
    /// Depth only: quantized value reserved for invalid pixels.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub invalid_value: Option<u16>,
}

/// Writes `<path>` and its sidecar `<path>.json`. Incident maps become RGB
/// (`v_x, v_y, v_z`), depth maps grayscale with invalid pixels at 0.
pub fn export_png16(map: &RasterMap, path: impl AsRef<Path>, unit_normalize: bool) -> Result<PngSidecar, PngError> {
    let path = path.as_ref();
    let g = map.geometry();
    let (channels, samples, invalid): (usize, Vec<f64>, bool) = match map {
        RasterMap::Incident(m) => {
            let samples = if unit_normalize {
                m.unit_vectors().into_iter().flatten().collect()
            } else {
                m.data().iter().flat_map(|v| [v[0] as f64, v[1] as f64, 1.0]).collect()
            };
            (3, samples, false)
        }
        RasterMap::Depth(d) => (1, d.values().iter().map(|v| *v as f64).collect(), true),
    };

    let mut ranges = vec![ChannelRange { min: f64::INFINITY, max: f64::NEG_INFINITY }; channels];
    for px in samples.chunks_exact(channels) {
        for (r, v) in ranges.iter_mut().zip(px) {
            if v.is_finite() {
                r.min = r.min.min(*v);
                r.max = r.max.max(*v);
            }
        }
    }
    for r in &mut ranges {
        if !r.min.is_finite() {
            *r = ChannelRange { min: 0.0, max: 0.0 };
        }
    }
    // Depth keeps 0 for invalid pixels, valid values span 1..=65535.
    let floor = if invalid { 1.0 } else { 0.0 };
    let mut bytes = Vec::with_capacity(samples.len() * 2);
    for px in samples.chunks_exact(channels) {
        for (r, v) in ranges.iter().zip(px) {
            let q = if !v.is_finite() {
                0u16
            } else if r.max > r.min {
                (floor + (v - r.min) / (r.max - r.min) * (65535.0 - floor)).round() as u16
            } else {
                floor as u16
            };
            bytes.extend_from_slice(&q.to_be_bytes());
        }
    }

    let mut encoder = png::Encoder::new(BufWriter::new(File::create(path)?), g.width() as u32, g.height() as u32);
    encoder.set_color(if channels == 3 { png::ColorType::Rgb } else { png::ColorType::Grayscale });
    encoder.set_depth(png::BitDepth::Sixteen);
    let mut writer = encoder.write_header()?;
    writer.write_image_data(&bytes)?;
    writer.finish()?;

    let sidecar = PngSidecar {
        kind: map.kind().to_string(),
        width: g.width(),
        height: g.height(),
        unit_normalized: unit_normalize && matches!(map, RasterMap::Incident(_)),
        channels: ranges,
        invalid_value: invalid.then_some(0),
    };
    let mut sidecar_path = path.as_os_str().to_owned();
    sidecar_path.push(".json");
    std::fs::write(sidecar_path, serde_json::to_string_pretty(&sidecar)?)?;
    Ok(sidecar)
}
