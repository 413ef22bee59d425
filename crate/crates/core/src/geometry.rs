//! Pinhole intrinsics, incident maps, and the image transforms that act on
//! them.
//!
//! Integer pixel coordinates address pixel centers: a `w x h` map is sampled
//! at `(x, y)` in `{0..w-1} x {0..h-1}`. Incidence vectors are kept in the
//! canonical `z = 1` form; the third component is never stored.

use alloc::vec::Vec;
#[cfg(not(feature = "std"))]
use num_traits::Float;
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("invalid intrinsics [{fx}, {fy}, {bx}, {by}]: focal lengths must be positive and all values finite")]
    InvalidIntrinsics { fx: f64, fy: f64, bx: f64, by: f64 },
    #[error("invalid image geometry {width}x{height}: both dimensions must be at least 2")]
    InvalidGeometry { width: usize, height: usize },
    #[error("scale factor {0} must be positive and finite")]
    InvalidScale(f64),
    #[error("map payload has {actual} pixels, geometry needs {expected}")]
    PayloadSize { expected: usize, actual: usize },
    #[error("crop window {width}x{height} at ({x}, {y}) does not fit inside the map")]
    CropOutOfBounds { x: usize, y: usize, width: usize, height: usize },
}

/// 4-DoF pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub bx: f64,
    pub by: f64,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, bx: f64, by: f64) -> Result<Self, GeometryError> {
        let k = Self { fx, fy, bx, by };
        if k.is_valid() {
            Ok(k)
        } else {
            Err(GeometryError::InvalidIntrinsics { fx, fy, bx, by })
        }
    }

    /// Square-pixel intrinsics with the principal point at `(w/2, h/2)`.
    pub fn centered(focal: f64, geometry: ImageGeometry) -> Result<Self, GeometryError> {
        let (bx, by) = geometry.center();
        Self::new(focal, focal, bx, by)
    }

    pub fn is_valid(&self) -> bool {
        self.fx.is_finite()
            && self.fy.is_finite()
            && self.bx.is_finite()
            && self.by.is_finite()
            && self.fx > 0.0
            && self.fy > 0.0
    }

    /// The 3x3 camera matrix `K`, row-major.
    pub fn matrix(&self) -> [[f64; 3]; 3] {
        [
            [self.fx, 0.0, self.bx],
            [0.0, self.fy, self.by],
            [0.0, 0.0, 1.0],
        ]
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.fx, self.fy, self.bx, self.by]
    }
}

/// Image size in pixels; both sides at least 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ImageGeometry {
    width: usize,
    height: usize,
}

impl ImageGeometry {
    pub fn new(width: usize, height: usize) -> Result<Self, GeometryError> {
        if width < 2 || height < 2 {
            return Err(GeometryError::InvalidGeometry { width, height });
        }
        Ok(Self { width, height })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// `(w/2, h/2)`, the principal point assumed by the 1-DoF mode.
    pub fn center(&self) -> (f64, f64) {
        (self.width as f64 / 2.0, self.height as f64 / 2.0)
    }

    /// Row-major `(x, y)` of a linear pixel index.
    #[inline]
    pub fn coords(&self, index: usize) -> (usize, usize) {
        (index % self.width, index / self.width)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelCoord {
    pub x: f64,
    pub y: f64,
}

impl PixelCoord {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

/// Dense per-pixel incidence vectors `(v_x, v_y)` with implicit `v_z = 1`,
/// row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct IncidentMap {
    geometry: ImageGeometry,
    data: Vec<[f32; 2]>,
}

impl IncidentMap {
    pub fn from_data(geometry: ImageGeometry, data: Vec<[f32; 2]>) -> Result<Self, GeometryError> {
        if data.len() != geometry.pixel_count() {
            return Err(GeometryError::PayloadSize {
                expected: geometry.pixel_count(),
                actual: data.len(),
            });
        }
        Ok(Self { geometry, data })
    }

    pub fn geometry(&self) -> ImageGeometry {
        self.geometry
    }

    pub fn data(&self) -> &[[f32; 2]] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [[f32; 2]] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<[f32; 2]> {
        self.data
    }

    pub fn get(&self, x: usize, y: usize) -> [f32; 2] {
        self.data[y * self.geometry.width + x]
    }

    /// The full `z = 1` vector at a pixel, widened to `f64`.
    pub fn vector(&self, x: usize, y: usize) -> [f64; 3] {
        let [vx, vy] = self.get(x, y);
        [vx as f64, vy as f64, 1.0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v[0].is_finite() && v[1].is_finite())
    }

    /// Sub-map of the window with top-left corner `(x0, y0)`.
    pub fn crop(&self, x0: usize, y0: usize, width: usize, height: usize) -> Result<Self, GeometryError> {
        let geometry = ImageGeometry::new(width, height)?;
        if x0 + width > self.geometry.width || y0 + height > self.geometry.height {
            return Err(GeometryError::CropOutOfBounds { x: x0, y: y0, width, height });
        }
        let mut data = Vec::with_capacity(geometry.pixel_count());
        for y in y0..y0 + height {
            let row = y * self.geometry.width;
            data.extend_from_slice(&self.data[row + x0..row + x0 + width]);
        }
        Ok(Self { geometry, data })
    }

    /// Unit-length copies of every ray, `[x, y, z]` per pixel.
    pub fn unit_vectors(&self) -> Vec<[f64; 3]> {
        self.data
            .iter()
            .map(|v| {
                let (x, y) = (v[0] as f64, v[1] as f64);
                let n = (x * x + y * y + 1.0).sqrt();
                [x / n, y / n, 1.0 / n]
            })
            .collect()
    }
}

/// `[(x - bx) / fx, (y - by) / fy, 1]`.
#[inline]
pub fn incident_vector(k: &Intrinsics, p: PixelCoord) -> [f64; 3] {
    [(p.x - k.bx) / k.fx, (p.y - k.by) / k.fy, 1.0]
}

pub fn synthesize_incident_map(k: &Intrinsics, geometry: ImageGeometry) -> IncidentMap {
    let (w, h) = (geometry.width, geometry.height);
    let mut data = Vec::with_capacity(w * h);
    for y in 0..h {
        let vy = ((y as f64 - k.by) / k.fy) as f32;
        for x in 0..w {
            let vx = ((x as f64 - k.bx) / k.fx) as f32;
            data.push([vx, vy]);
        }
    }
    IncidentMap { geometry, data }
}

/// Intrinsics of the window whose top-left corner sits at `offset`.
pub fn crop_intrinsics(k: &Intrinsics, offset: PixelCoord) -> Intrinsics {
    Intrinsics {
        fx: k.fx,
        fy: k.fy,
        bx: k.bx - offset.x,
        by: k.by - offset.y,
    }
}

/// Scales intrinsics and image size by `scale`; dimensions round to nearest.
pub fn resize_intrinsics(
    k: &Intrinsics,
    geometry: ImageGeometry,
    scale: f64,
) -> Result<(Intrinsics, ImageGeometry), GeometryError> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(GeometryError::InvalidScale(scale));
    }
    let width = (geometry.width as f64 * scale).round() as usize;
    let height = (geometry.height as f64 * scale).round() as usize;
    let resized = ImageGeometry::new(width, height)?;
    let k = Intrinsics {
        fx: k.fx * scale,
        fy: k.fy * scale,
        bx: k.bx * scale,
        by: k.by * scale,
    };
    Ok((k, resized))
}

/// One enlarge-then-crop augmentation draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentDraw {
    pub scale: f64,
    pub offset_x: usize,
    pub offset_y: usize,
}

/// Enlarges by `draw.scale` and crops a `geometry`-sized window at the
/// draw's offset. Offsets are clamped to the available slack.
pub fn apply_augmentation(
    k: &Intrinsics,
    geometry: ImageGeometry,
    draw: AugmentDraw,
) -> Result<(Intrinsics, ImageGeometry), GeometryError> {
    let (enlarged, big) = resize_intrinsics(k, geometry, draw.scale)?;
    let slack_x = big.width.saturating_sub(geometry.width);
    let slack_y = big.height.saturating_sub(geometry.height);
    let offset = PixelCoord::new(
        draw.offset_x.min(slack_x) as f64,
        draw.offset_y.min(slack_y) as f64,
    );
    Ok((crop_intrinsics(&enlarged, offset), geometry))
}

/// Random enlargement by `s ~ U[1, 2]` followed by a uniformly placed crop
/// back to `geometry`. Scale is drawn before the offset.
pub fn augment_intrinsics<R: Rng + ?Sized>(
    k: &Intrinsics,
    geometry: ImageGeometry,
    rng: &mut R,
) -> Result<(Intrinsics, ImageGeometry), GeometryError> {
    let scale = rng.random_range(1.0..=2.0);
    let (_, big) = resize_intrinsics(k, geometry, scale)?;
    let slack_x = big.width.saturating_sub(geometry.width);
    let slack_y = big.height.saturating_sub(geometry.height);
    let offset_x = rng.random_range(0..=slack_x);
    let offset_y = rng.random_range(0..=slack_y);
    apply_augmentation(k, geometry, AugmentDraw { scale, offset_x, offset_y })
}
