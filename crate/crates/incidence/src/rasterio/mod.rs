//! Serialization of incident maps, depth maps, intrinsics, and point clouds.

pub mod fixtures;
pub mod format;
pub mod json;
pub mod ply;
pub mod png;

pub use format::{decode_map, encode_map, read_map, write_map, FormatError, MapFileHeader, MapKind, RasterMap};
pub use json::{intrinsics_json, parse_intrinsics_json, JsonError};
pub use ply::{read_ply, write_ply, PlyError};
