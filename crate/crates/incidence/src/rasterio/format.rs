//! IMAP / DMAP binary rasters.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! offset  size  field
//!      0     4  magic          b"IMAP" (incident map) or b"DMAP" (depth map)
//!      4     4  version        u32, currently 1
//!      8     4  width          u32
//!     12     4  height         u32
//!     16     4  channels       u32, 2 for IMAP, 1 for DMAP
//!     20     4  payload_bytes  u32, width * height * channels * 4
//!     24     .  payload        f32 values, row-major, channel-interleaved
//! ```
//!
//! Invalid depth pixels are stored as NaN.

use std::fs;
use std::io;
use std::path::Path;

use incidence_core::{DepthMap, ImageGeometry, IncidentMap};
use thiserror::Error;

pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 24;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("bad magic {0:?}: expected IMAP or DMAP")]
    BadMagic([u8; 4]),
    #[error("unsupported format version {0} (this reader handles {VERSION})")]
    UnsupportedVersion(u32),
    #[error("file truncated: need {expected} bytes, have {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("payload size mismatch: header declares {declared} bytes, geometry implies {implied}, file holds {actual}")]
    SizeMismatch { declared: usize, implied: usize, actual: usize },
    #[error("{kind} files carry {expected} channels, header says {actual}")]
    ChannelMismatch { kind: MapKind, expected: u32, actual: u32 },
    #[error("invalid geometry {width}x{height}")]
    InvalidGeometry { width: u32, height: u32 },
    #[error("expected a {expected} file, found {found}")]
    WrongKind { expected: MapKind, found: MapKind },
    #[error("map too large for this format")]
    TooLarge,
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapKind {
    Incident,
    Depth,
}

impl MapKind {
    pub fn magic(self) -> [u8; 4] {
        match self {
            MapKind::Incident => *b"IMAP",
            MapKind::Depth => *b"DMAP",
        }
    }

    pub fn channels(self) -> u32 {
        match self {
            MapKind::Incident => 2,
            MapKind::Depth => 1,
        }
    }

    fn from_magic(magic: [u8; 4]) -> Option<Self> {
        match &magic {
            b"IMAP" => Some(MapKind::Incident),
            b"DMAP" => Some(MapKind::Depth),
            _ => None,
        }
    }
}

impl std::fmt::Display for MapKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(std::str::from_utf8(&self.magic()).expect("ascii magic"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MapFileHeader {
    pub magic: [u8; 4],
    pub version: u32,
    pub width: u32,
    pub height: u32,
    pub channels: u32,
    pub payload_bytes: u32,
}

impl MapFileHeader {
    fn for_map(kind: MapKind, g: ImageGeometry) -> Result<Self, FormatError> {
        let to_u32 = |v: usize| u32::try_from(v).map_err(|_| FormatError::TooLarge);
        let payload = g
            .pixel_count()
            .checked_mul(kind.channels() as usize * 4)
            .ok_or(FormatError::TooLarge)?;
        Ok(Self {
            magic: kind.magic(),
            version: VERSION,
            width: to_u32(g.width())?,
            height: to_u32(g.height())?,
            channels: kind.channels(),
            payload_bytes: to_u32(payload)?,
        })
    }

    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut out = [0u8; HEADER_LEN];
        out[0..4].copy_from_slice(&self.magic);
        for (i, v) in [self.version, self.width, self.height, self.channels, self.payload_bytes].iter().enumerate() {
            out[4 + 4 * i..8 + 4 * i].copy_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn parse(bytes: &[u8]) -> Result<Self, FormatError> {
        if bytes.len() < 4 {
            return Err(FormatError::Truncated { expected: HEADER_LEN, actual: bytes.len() });
        }
        let magic: [u8; 4] = bytes[0..4].try_into().expect("four bytes");
        if MapKind::from_magic(magic).is_none() {
            return Err(FormatError::BadMagic(magic));
        }
        if bytes.len() < HEADER_LEN {
            return Err(FormatError::Truncated { expected: HEADER_LEN, actual: bytes.len() });
        }
        let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().expect("four bytes"));
        Ok(Self {
            magic,
            version: word(0),
            width: word(1),
            height: word(2),
            channels: word(3),
            payload_bytes: word(4),
        })
    }

    pub fn kind(&self) -> Option<MapKind> {
        MapKind::from_magic(self.magic)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RasterMap {
    Incident(IncidentMap),
    Depth(DepthMap),
}

impl RasterMap {
    pub fn kind(&self) -> MapKind {
        match self {
            RasterMap::Incident(_) => MapKind::Incident,
            RasterMap::Depth(_) => MapKind::Depth,
        }
    }

    pub fn geometry(&self) -> ImageGeometry {
        match self {
            RasterMap::Incident(m) => m.geometry(),
            RasterMap::Depth(d) => d.geometry(),
        }
    }

    pub fn into_incident(self) -> Result<IncidentMap, FormatError> {
        match self {
            RasterMap::Incident(m) => Ok(m),
            other => Err(FormatError::WrongKind { expected: MapKind::Incident, found: other.kind() }),
        }
    }

    pub fn into_depth(self) -> Result<DepthMap, FormatError> {
        match self {
            RasterMap::Depth(d) => Ok(d),
            other => Err(FormatError::WrongKind { expected: MapKind::Depth, found: other.kind() }),
        }
    }
}

impl From<IncidentMap> for RasterMap {
    fn from(m: IncidentMap) -> Self {
        RasterMap::Incident(m)
    }
}

impl From<DepthMap> for RasterMap {
    fn from(d: DepthMap) -> Self {
        RasterMap::Depth(d)
    }
}

pub fn encode_map(map: &RasterMap) -> Result<Vec<u8>, FormatError> {
    let header = MapFileHeader::for_map(map.kind(), map.geometry())?;
    let mut out = Vec::with_capacity(HEADER_LEN + header.payload_bytes as usize);
    out.extend_from_slice(&header.to_bytes());
    match map {
        RasterMap::Incident(m) => {
            for v in m.data() {
                out.extend_from_slice(&v[0].to_le_bytes());
                out.extend_from_slice(&v[1].to_le_bytes());
            }
        }
        RasterMap::Depth(d) => {
            for v in d.values() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    Ok(out)
}

pub fn decode_map(bytes: &[u8]) -> Result<RasterMap, FormatError> {
    let header = MapFileHeader::parse(bytes)?;
    let kind = header.kind().expect("parse checks the magic");
    if header.version != VERSION {
        return Err(FormatError::UnsupportedVersion(header.version));
    }
    if header.channels != kind.channels() {
        return Err(FormatError::ChannelMismatch { kind, expected: kind.channels(), actual: header.channels });
    }
    let geometry = ImageGeometry::new(header.width as usize, header.height as usize)
        .map_err(|_| FormatError::InvalidGeometry { width: header.width, height: header.height })?;
    let implied = geometry.pixel_count() * header.channels as usize * 4;
    let declared = header.payload_bytes as usize;
    let actual = bytes.len() - HEADER_LEN;
    if declared != implied {
        return Err(FormatError::SizeMismatch { declared, implied, actual });
    }
    if actual < declared {
        return Err(FormatError::Truncated { expected: HEADER_LEN + declared, actual: bytes.len() });
    }
    if actual > declared {
        return Err(FormatError::SizeMismatch { declared, implied, actual });
    }
    let floats = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("four bytes")));
    Ok(match kind {
        MapKind::Incident => {
            let values: Vec<f32> = floats.collect();
            let data = values.chunks_exact(2).map(|c| [c[0], c[1]]).collect();
            RasterMap::Incident(IncidentMap::from_data(geometry, data).expect("size checked"))
        }
        MapKind::Depth => RasterMap::Depth(DepthMap::new(geometry, floats.collect()).expect("size checked")),
    })
}

pub fn write_map(path: impl AsRef<Path>, map: &RasterMap) -> Result<(), FormatError> {
    fs::write(path, encode_map(map)?)?;
    Ok(())
}

pub fn read_map(path: impl AsRef<Path>) -> Result<RasterMap, FormatError> {
    decode_map(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use incidence_core::geometry::synthesize_incident_map;
    use incidence_core::Intrinsics;

    fn sample_imap() -> RasterMap {
        let k = Intrinsics::new(100.0, 90.0, 3.5, 2.5).unwrap();
        synthesize_incident_map(&k, ImageGeometry::new(7, 5).unwrap()).into()
    }

    #[test]
    fn dmap_2x2_is_40_bytes() {
        let d = DepthMap::new(ImageGeometry::new(2, 2).unwrap(), vec![1.0, 2.0, f32::NAN, 4.0]).unwrap();
        let bytes = encode_map(&d.clone().into()).unwrap();
        assert_eq!(bytes.len(), 24 + 16);
        assert_eq!(&bytes[0..4], b"DMAP");
        assert_eq!(decode_map(&bytes).unwrap(), RasterMap::Depth(d));
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = sample_imap();
        let bytes = encode_map(&m).unwrap();
        let back = decode_map(&bytes).unwrap();
        assert_eq!(back, m);
        assert_eq!(encode_map(&back).unwrap(), bytes);
    }

    #[test]
    fn distinct_errors_for_corruption() {
        let bytes = encode_map(&sample_imap()).unwrap();
        let mut bad = bytes.clone();
        bad[0..4].copy_from_slice(b"XXXX");
        assert!(matches!(decode_map(&bad), Err(FormatError::BadMagic(m)) if &m == b"XXXX"));
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(decode_map(&bad), Err(FormatError::UnsupportedVersion(9))));
        assert!(matches!(decode_map(&bytes[..bytes.len() - 3]), Err(FormatError::Truncated { .. })));
        assert!(matches!(decode_map(&bytes[..10]), Err(FormatError::Truncated { .. })));
        let mut long = bytes.clone();
        long.extend_from_slice(&[0; 4]);
        assert!(matches!(decode_map(&long), Err(FormatError::SizeMismatch { .. })));
        let mut bad = bytes.clone();
        bad[20] ^= 0xff;
        assert!(matches!(decode_map(&bad), Err(FormatError::SizeMismatch { .. })));
        let mut bad = bytes.clone();
        bad[16] = 1;
        assert!(matches!(decode_map(&bad), Err(FormatError::ChannelMismatch { .. })));
        let mut bad = bytes;
        bad[8..12].copy_from_slice(&1u32.to_le_bytes());
        assert!(matches!(decode_map(&bad), Err(FormatError::InvalidGeometry { .. })));
    }

    #[test]
    fn kind_accessors() {
        let m = sample_imap();
        assert_eq!(m.kind(), MapKind::Incident);
        assert!(matches!(m.into_depth(), Err(FormatError::WrongKind { .. })));
    }
}
