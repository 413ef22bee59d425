//! Depth unprojection to point clouds and its inverse.

use alloc::vec::Vec;
use thiserror::Error;

use crate::geometry::{Intrinsics, PixelCoord};
use crate::metrics::{DepthMap, PointCloud};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReconError {
    #[error("depth map has no valid pixels")]
    NoValidPixels,
    #[error("point {index} has non-positive depth {z}")]
    BehindCamera { index: usize, z: f64 },
}

/// Pixel coordinates and depths of reprojected points, in cloud order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReprojectionResult {
    pub pixels: Vec<PixelCoord>,
    pub depths: Vec<f64>,
}

/// `P = d * [(x - bx) / fx, (y - by) / fy, 1]` for every valid pixel, in
/// row-major order.
pub fn unproject(depth: &DepthMap, k: &Intrinsics) -> Result<PointCloud, ReconError> {
    let g = depth.geometry();
    let mut points = Vec::with_capacity(depth.valid_count());
    for (i, (&d, &valid)) in depth.values().iter().zip(depth.mask()).enumerate() {
        if !valid {
            continue;
        }
        let (x, y) = g.coords(i);
        let d = d as f64;
        points.push([d * (x as f64 - k.bx) / k.fx, d * (y as f64 - k.by) / k.fy, d]);
    }
    if points.is_empty() {
        return Err(ReconError::NoValidPixels);
    }
    Ok(PointCloud::new(points).expect("finite depth and intrinsics give finite points"))
}

pub fn reproject(cloud: &PointCloud, k: &Intrinsics) -> Result<ReprojectionResult, ReconError> {
    let mut out = ReprojectionResult {
        pixels: Vec::with_capacity(cloud.len()),
        depths: Vec::with_capacity(cloud.len()),
    };
    for (index, p) in cloud.points().iter().enumerate() {
        let z = p[2];
        if z.is_nan() || z <= 0.0 {
            return Err(ReconError::BehindCamera { index, z });
        }
        out.pixels.push(PixelCoord::new(k.fx * (p[0] / z) + k.bx, k.fy * (p[1] / z) + k.by));
        out.depths.push(z);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ImageGeometry;
    use alloc::vec;

    fn hypersim() -> Intrinsics {
        Intrinsics::new(889.0, 889.0, 512.0, 384.0).unwrap()
    }

    fn single_pixel(x: usize, y: usize, d: f32) -> DepthMap {
        let g = ImageGeometry::new(1402, 385).unwrap();
        let mut values = vec![f32::NAN; g.pixel_count()];
        values[y * g.width() + x] = d;
        DepthMap::new(g, values).unwrap()
    }

    #[test]
    fn unproject_examples() {
        let c = unproject(&single_pixel(512, 384, 2.0), &hypersim()).unwrap();
        assert_eq!(c.points(), &[[0.0, 0.0, 2.0]]);
        let c = unproject(&single_pixel(1401, 384, 3.0), &hypersim()).unwrap();
        assert_eq!(c.points(), &[[3.0, 0.0, 3.0]]);
        let plane = DepthMap::constant(ImageGeometry::new(16, 9).unwrap(), 1.5).unwrap();
        let c = unproject(&plane, &hypersim()).unwrap();
        assert_eq!(c.len(), 144);
        assert!(c.points().iter().all(|p| p[2] == 1.5));
    }

    #[test]
    fn unproject_without_valid_pixels() {
        let empty = DepthMap::new(ImageGeometry::new(2, 2).unwrap(), vec![f32::NAN; 4]).unwrap();
        assert_eq!(unproject(&empty, &hypersim()), Err(ReconError::NoValidPixels));
    }

    #[test]
    fn reproject_examples() {
        let k = hypersim();
        let r = reproject(&PointCloud::new(vec![[0.0, 0.0, 5.0], [3.0, 0.0, 3.0]]).unwrap(), &k).unwrap();
        assert_eq!(r.pixels, vec![PixelCoord::new(512.0, 384.0), PixelCoord::new(1401.0, 384.0)]);
        assert_eq!(r.depths, vec![5.0, 3.0]);
        let behind = PointCloud::new(vec![[0.0, 0.0, 1.0], [1.0, 1.0, 0.0]]).unwrap();
        assert_eq!(reproject(&behind, &k), Err(ReconError::BehindCamera { index: 1, z: 0.0 }));
    }

    #[test]
    fn unprojection_is_linear_in_depth() {
        let k = Intrinsics::new(300.0, 310.0, 7.5, 5.5).unwrap();
        let g = ImageGeometry::new(16, 12).unwrap();
        let values: Vec<f32> = (0..g.pixel_count()).map(|i| 1.0 + (i % 7) as f32 * 0.5).collect();
        let scaled: Vec<f32> = values.iter().map(|v| v * 4.0).collect();
        let a = unproject(&DepthMap::new(g, values).unwrap(), &k).unwrap();
        let b = unproject(&DepthMap::new(g, scaled).unwrap(), &k).unwrap();
        for (p, q) in a.points().iter().zip(b.points()) {
            for c in 0..3 {
                assert!((p[c] * 4.0 - q[c]).abs() <= 1e-12 * q[c].abs().max(1.0));
            }
        }
    }
}
