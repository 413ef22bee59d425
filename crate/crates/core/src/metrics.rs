//! Evaluation metrics for calibration, affine-invariant depth, and point
//! clouds.

mod kdtree;

use alloc::vec::Vec;
#[cfg(not(feature = "std"))]
use num_traits::Float;
use thiserror::Error;

use crate::geometry::{ImageGeometry, Intrinsics};
pub use kdtree::KdTree;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("depth maps have different geometry")]
    GeometryMismatch,
    #[error("depth payload has {actual} values, geometry needs {expected}")]
    PayloadSize { expected: usize, actual: usize },
    #[error("no jointly valid pixels")]
    NoValidPixels,
    #[error("alignment is rank deficient: prediction is constant over the valid pixels")]
    RankDeficient,
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("point cloud contains a non-finite coordinate")]
    NonFinitePoint,
    #[error("threshold {0} must be positive")]
    InvalidThreshold(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationError {
    /// Largest relative focal error over the two axes.
    pub e_f: f64,
    /// Largest principal-point offset over the two axes, normalized by the
    /// half image size.
    pub e_b: f64,
}

pub fn calib_error(gt: &Intrinsics, pred: &Intrinsics, geometry: ImageGeometry) -> CalibrationError {
    let e_f = ((pred.fx - gt.fx).abs() / gt.fx).max((pred.fy - gt.fy).abs() / gt.fy);
    let e_b = (2.0 * (pred.bx - gt.bx).abs() / geometry.width() as f64)
        .max(2.0 * (pred.by - gt.by).abs() / geometry.height() as f64);
    CalibrationError { e_f, e_b }
}

/// Per-pixel depth with a validity mask. Invalid pixels hold NaN.
#[derive(Debug, Clone)]
pub struct DepthMap {
    geometry: ImageGeometry,
    values: Vec<f32>,
    mask: Vec<bool>,
}

impl DepthMap {
    /// Pixels are valid where the value is finite and positive.
    pub fn new(geometry: ImageGeometry, values: Vec<f32>) -> Result<Self, MetricsError> {
        let mask = values.iter().map(|v| v.is_finite() && *v > 0.0).collect();
        Self::with_mask(geometry, values, mask)
    }

    /// Explicit mask; masked-out values are replaced by NaN and masked-in
    /// values must be finite.
    pub fn with_mask(geometry: ImageGeometry, mut values: Vec<f32>, mut mask: Vec<bool>) -> Result<Self, MetricsError> {
        let expected = geometry.pixel_count();
        if values.len() != expected || mask.len() != expected {
            return Err(MetricsError::PayloadSize { expected, actual: values.len().min(mask.len()) });
        }
        for (v, m) in values.iter_mut().zip(mask.iter_mut()) {
            if !v.is_finite() {
                *m = false;
            }
            if !*m {
                *v = f32::NAN;
            }
        }
        Ok(Self { geometry, values, mask })
    }

    pub fn constant(geometry: ImageGeometry, depth: f32) -> Result<Self, MetricsError> {
        Self::new(geometry, alloc::vec![depth; geometry.pixel_count()])
    }

    pub fn geometry(&self) -> ImageGeometry {
        self.geometry
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn get(&self, x: usize, y: usize) -> Option<f32> {
        let i = y * self.geometry.width() + x;
        self.mask[i].then(|| self.values[i])
    }

    pub fn valid_count(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    /// Indices valid in both maps.
    fn joint_valid(&self, other: &DepthMap) -> Result<Vec<usize>, MetricsError> {
        if self.geometry != other.geometry {
            return Err(MetricsError::GeometryMismatch);
        }
        Ok((0..self.values.len()).filter(|&i| self.mask[i] && other.mask[i]).collect())
    }
}

/// Equal when geometry and mask agree and valid values are bit-identical.
impl PartialEq for DepthMap {
    fn eq(&self, other: &Self) -> bool {
        self.geometry == other.geometry
            && self.mask == other.mask
            && self
                .values
                .iter()
                .zip(&other.values)
                .zip(&self.mask)
                .all(|((a, b), m)| !*m || a.to_bits() == b.to_bits())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineAlignment {
    pub scale: f64,
    pub shift: f64,
}

impl AffineAlignment {
    pub fn apply(&self, depth: &DepthMap) -> DepthMap {
        let values = depth
            .values
            .iter()
            .zip(&depth.mask)
            .map(|(v, m)| if *m { (self.scale * *v as f64 + self.shift) as f32 } else { f32::NAN })
            .collect();
        DepthMap { geometry: depth.geometry, values, mask: depth.mask.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlignMode {
    Scale,
    ScaleShift,
}

/// Least-squares `(scale, shift)` minimizing `sum (scale * pred + shift - gt)^2`
/// over jointly valid pixels.
pub fn align_affine(pred: &DepthMap, gt: &DepthMap) -> Result<AffineAlignment, MetricsError> {
    let idx = pred.joint_valid(gt)?;
    if idx.len() < 2 {
        return Err(MetricsError::NoValidPixels);
    }
    let n = idx.len() as f64;
    let (mut mp, mut mg) = (0.0, 0.0);
    for &i in &idx {
        mp += pred.values[i] as f64;
        mg += gt.values[i] as f64;
    }
    mp /= n;
    mg /= n;
    let (mut spp, mut spg) = (0.0, 0.0);
    for &i in &idx {
        let dp = pred.values[i] as f64 - mp;
        spp += dp * dp;
        spg += dp * (gt.values[i] as f64 - mg);
    }
    if spp <= 0.0 {
        return Err(MetricsError::RankDeficient);
    }
    let scale = spg / spp;
    Ok(AffineAlignment { scale, shift: mg - scale * mp })
}

/// Least-squares scale with zero shift.
pub fn align_scale(pred: &DepthMap, gt: &DepthMap) -> Result<AffineAlignment, MetricsError> {
    let idx = pred.joint_valid(gt)?;
    if idx.is_empty() {
        return Err(MetricsError::NoValidPixels);
    }
    let (mut spp, mut spg) = (0.0, 0.0);
    for &i in &idx {
        let p = pred.values[i] as f64;
        spp += p * p;
        spg += p * gt.values[i] as f64;
    }
    if spp <= 0.0 {
        return Err(MetricsError::RankDeficient);
    }
    Ok(AffineAlignment { scale: spg / spp, shift: 0.0 })
}

pub fn align_depth(pred: &DepthMap, gt: &DepthMap, mode: AlignMode) -> Result<AffineAlignment, MetricsError> {
    match mode {
        AlignMode::Scale => align_scale(pred, gt),
        AlignMode::ScaleShift => align_affine(pred, gt),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthErrors {
    pub abs_rel: f64,
    /// Fraction of pixels with `max(pred/gt, gt/pred) < 1.25`.
    pub delta1: f64,
}

pub const DELTA1_THRESHOLD: f64 = 1.25;

pub fn depth_errors(pred: &DepthMap, gt: &DepthMap) -> Result<DepthErrors, MetricsError> {
    let idx = pred.joint_valid(gt)?;
    let idx: Vec<usize> = idx.into_iter().filter(|&i| gt.values[i] > 0.0).collect();
    if idx.is_empty() {
        return Err(MetricsError::NoValidPixels);
    }
    let (mut abs_rel, mut hits) = (0.0, 0usize);
    for &i in &idx {
        let (p, g) = (pred.values[i] as f64, gt.values[i] as f64);
        abs_rel += (p - g).abs() / g;
        if (p / g).max(g / p) < DELTA1_THRESHOLD {
            hits += 1;
        }
    }
    let n = idx.len() as f64;
    Ok(DepthErrors { abs_rel: abs_rel / n, delta1: hits as f64 / n })
}

/// 3-D points in meters.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    points: Vec<[f64; 3]>,
}

impl PointCloud {
    pub fn new(points: Vec<[f64; 3]>) -> Result<Self, MetricsError> {
        if points.iter().flatten().any(|c| !c.is_finite()) {
            return Err(MetricsError::NonFinitePoint);
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }

    pub fn into_points(self) -> Vec<[f64; 3]> {
        self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { points: self.points.iter().map(|p| [p[0] * s, p[1] * s, p[2] * s]).collect() }
    }
}

/// Euclidean distance from every point of `from` to its nearest neighbor in
/// `to`, in `from` order.
pub fn nearest_distances(from: &PointCloud, to: &PointCloud) -> Result<Vec<f64>, MetricsError> {
    if from.is_empty() || to.is_empty() {
        return Err(MetricsError::EmptyCloud);
    }
    let tree = KdTree::build(&to.points);
    Ok(from
        .points
        .iter()
        .map(|p| tree.nearest_squared(p).expect("non-empty tree").sqrt())
        .collect())
}

/// Symmetric Chamfer-L1: the mean of the two directed mean nearest-neighbor
/// distances.
pub fn chamfer_l1(a: &PointCloud, b: &PointCloud) -> Result<f64, MetricsError> {
    let ab = nearest_distances(a, b)?;
    let ba = nearest_distances(b, a)?;
    Ok(0.5 * (crate::stats::mean(&ab) + crate::stats::mean(&ba)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FScore {
    pub precision: f64,
    pub recall: f64,
    pub fscore: f64,
}

/// Default F-score threshold, meters.
pub const FSCORE_TAU: f64 = 0.05;

/// Precision is the share of `pred` within `tau` of `gt`; recall the share
/// of `gt` within `tau` of `pred`.
pub fn fscore_detailed(pred: &PointCloud, gt: &PointCloud, tau: f64) -> Result<FScore, MetricsError> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(MetricsError::InvalidThreshold(tau));
    }
    let within = |d: Vec<f64>| d.iter().filter(|x| **x < tau).count() as f64 / d.len() as f64;
    let precision = within(nearest_distances(pred, gt)?);
    let recall = within(nearest_distances(gt, pred)?);
    let fscore = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
    Ok(FScore { precision, recall, fscore })
}

pub fn fscore(pred: &PointCloud, gt: &PointCloud, tau: f64) -> Result<f64, MetricsError> {
    fscore_detailed(pred, gt, tau).map(|f| f.fscore)
}
