//! Published intrinsics of common depth and calibration datasets.
//!
//! Image sizes are each dataset's native resolution; they are needed to
//! synthesize maps and to normalize the principal-point error.

use incidence_core::{ImageGeometry, Intrinsics};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixtureEntry {
    pub name: &'static str,
    pub intrinsics: Intrinsics,
    pub width: usize,
    pub height: usize,
    pub source: &'static str,
}

impl FixtureEntry {
    pub fn geometry(&self) -> ImageGeometry {
        ImageGeometry::new(self.width, self.height).expect("fixture sizes are valid")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown fixture `{name}`; known fixtures: {known}")]
pub struct UnknownFixture {
    pub name: String,
    pub known: String,
}

const fn k(fx: f64, fy: f64, bx: f64, by: f64) -> Intrinsics {
    Intrinsics { fx, fy, bx, by }
}

const CHECKERBOARD: &str = "checkerboard calibration";
const MANUFACTURER: &str = "manufacturer default, uncalibrated";

pub const FIXTURES: [FixtureEntry; 13] = [
    FixtureEntry { name: "hypersim", intrinsics: k(889.0, 889.0, 512.0, 384.0), width: 1024, height: 768, source: "synthetic renderer, fixed across scenes" },
    FixtureEntry { name: "nuscenes", intrinsics: k(1266.24, 1266.42, 816.27, 491.51), width: 1600, height: 900, source: CHECKERBOARD },
    FixtureEntry { name: "kitti", intrinsics: k(718.86, 718.86, 607.19, 185.22), width: 1242, height: 375, source: CHECKERBOARD },
    FixtureEntry { name: "cityscapes", intrinsics: k(2267.86, 2230.28, 1045.53, 518.88), width: 2048, height: 1024, source: CHECKERBOARD },
    FixtureEntry { name: "nyu", intrinsics: k(518.85, 519.47, 325.58, 253.74), width: 640, height: 480, source: CHECKERBOARD },
    FixtureEntry { name: "sun3d", intrinsics: k(570.34, 570.32, 320.00, 240.00), width: 640, height: 480, source: CHECKERBOARD },
    FixtureEntry { name: "arkitscenes", intrinsics: k(1601.95, 1601.95, 936.55, 709.61), width: 1920, height: 1440, source: CHECKERBOARD },
    FixtureEntry { name: "objectron", intrinsics: k(1579.18, 1579.18, 721.01, 934.70), width: 1440, height: 1920, source: CHECKERBOARD },
    FixtureEntry { name: "waymo", intrinsics: k(2060.56, 2060.56, 947.46, 634.37), width: 1920, height: 1280, source: CHECKERBOARD },
    FixtureEntry { name: "rgbd", intrinsics: k(570.00, 570.00, 320.00, 240.00), width: 640, height: 480, source: MANUFACTURER },
    FixtureEntry { name: "scannet", intrinsics: k(1165.72, 1165.74, 649.09, 484.77), width: 1296, height: 968, source: CHECKERBOARD },
    FixtureEntry { name: "mvs", intrinsics: k(570.00, 570.00, 320.00, 240.00), width: 640, height: 480, source: MANUFACTURER },
    FixtureEntry { name: "scenes11", intrinsics: k(570.00, 570.00, 320.00, 240.00), width: 640, height: 480, source: MANUFACTURER },
];

pub fn fixture_names() -> impl Iterator<Item = &'static str> {
    FIXTURES.iter().map(|f| f.name)
}

pub fn fixture_intrinsics(name: &str) -> Result<&'static FixtureEntry, UnknownFixture> {
    let key = name.to_ascii_lowercase();
    FIXTURES.iter().find(|f| f.name == key).ok_or_else(|| UnknownFixture {
        name: name.to_string(),
        known: fixture_names().collect::<Vec<_>>().join(", "),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn published_values() {
        assert_eq!(fixture_intrinsics("waymo").unwrap().intrinsics.to_array(), [2060.56, 2060.56, 947.46, 634.37]);
        assert_eq!(fixture_intrinsics("scannet").unwrap().intrinsics.to_array(), [1165.72, 1165.74, 649.09, 484.77]);
        assert_eq!(fixture_intrinsics("nyu").unwrap().intrinsics.to_array(), [518.85, 519.47, 325.58, 253.74]);
        assert_eq!(fixture_intrinsics("hypersim").unwrap().intrinsics.fx, 889.0);
    }

    #[test]
    fn every_entry_is_valid_and_in_frame() {
        for f in &FIXTURES {
            assert!(f.intrinsics.is_valid(), "{}", f.name);
            let g = f.geometry();
            assert!(f.intrinsics.bx > 0.0 && f.intrinsics.bx < g.width() as f64, "{}", f.name);
            assert!(f.intrinsics.by > 0.0 && f.intrinsics.by < g.height() as f64, "{}", f.name);
        }
    }

    #[test]
    fn unknown_name_lists_known_fixtures() {
        let err = fixture_intrinsics("nosuch").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("nosuch") && msg.contains("scannet") && msg.contains("scenes11"));
        assert!(fixture_intrinsics("ScanNet").is_ok());
    }
}
