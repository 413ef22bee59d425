//! Intrinsics recovery from incident maps.
//!
//! Two pixels with distinct coordinates on both axes determine all four
//! pinhole parameters ([`minimal_solve`]). [`ransac_calibrate`] wraps the
//! minimal solver in a consensus loop scored by ray angle and polishes the
//! winner with a closed-form least-squares fit. [`enumerate_focal`] handles
//! the centered, square-pixel case by scanning a focal grid.

use alloc::vec::Vec;
#[cfg(not(feature = "std"))]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::geometry::{ImageGeometry, IncidentMap, Intrinsics, PixelCoord};
use crate::stats::{lower_median, stride_subsample};

/// 0.5 degrees.
pub const DEFAULT_INLIER_THRESHOLD: f64 = 0.008_726_646_259_971_648;

/// Maps above 256x256 are scored on at most this many pixels.
pub const MAX_SCORING_PIXELS: usize = 65_536;

/// Redraws allowed per trial when the sampled pair is degenerate.
const MAX_RESAMPLES: usize = 32;

/// Consensus sets are re-scored and refit at most this many times.
const REFINE_ROUNDS: usize = 3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("degenerate sample: coordinates or incidence components coincide")]
    DegenerateSample,
    #[error("minimal solution is invalid (non-positive or non-finite focal length)")]
    InvalidSolution,
    #[error("no consensus: best inlier ratio {best_ratio:.4} is below the required {required:.4}")]
    NoConsensus { best_ratio: f64, required: f64 },
    #[error("vector has zero length or is not finite")]
    ZeroVector,
    #[error("inlier set is rank deficient: need at least two inliers with distinct coordinates and incidence on both axes")]
    RankDeficient,
    #[error("mask has {actual} entries, map has {expected} pixels")]
    MaskSize { expected: usize, actual: usize },
    #[error("focal grid must be non-empty, positive and strictly increasing")]
    InvalidGrid,
    #[error("incident map contains non-finite values")]
    NonFiniteMap,
    #[error("invalid solver config: {0}")]
    InvalidConfig(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub iterations: usize,
    /// Angular inlier threshold, radians.
    pub inlier_threshold: f64,
    pub seed: u64,
    /// Fix the principal point at the image center with `fx = fy` and
    /// enumerate the focal length instead of running RANSAC.
    pub assume_centered: bool,
    pub min_inlier_ratio: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            iterations: 2048,
            inlier_threshold: DEFAULT_INLIER_THRESHOLD,
            seed: 0,
            assume_centered: false,
            min_inlier_ratio: 0.2,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        if self.iterations == 0 {
            return Err(SolverError::InvalidConfig("iterations must be at least 1"));
        }
        if !(self.inlier_threshold.is_finite() && self.inlier_threshold > 0.0) {
            return Err(SolverError::InvalidConfig("inlier_threshold must be positive"));
        }
        if !(self.min_inlier_ratio > 0.0 && self.min_inlier_ratio <= 1.0) {
            return Err(SolverError::InvalidConfig("min_inlier_ratio must lie in (0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationEstimate {
    pub intrinsics: Intrinsics,
    /// Fraction of pixels whose ray lies within the inlier threshold.
    pub inlier_ratio: f64,
    /// Lower median of the per-pixel angular residual, radians.
    pub median_residual: f64,
}

/// Candidate focal lengths for [`enumerate_focal`].
#[derive(Debug, Clone, PartialEq)]
pub struct FocalGrid {
    candidates: Vec<f64>,
}

impl FocalGrid {
    pub fn new(candidates: Vec<f64>) -> Result<Self, SolverError> {
        let ok = !candidates.is_empty()
            && candidates.iter().all(|f| f.is_finite() && *f > 0.0)
            && candidates.windows(2).all(|w| w[0] < w[1]);
        if ok {
            Ok(Self { candidates })
        } else {
            Err(SolverError::InvalidGrid)
        }
    }

    /// `count` log-spaced focal lengths from `min` to `max` inclusive.
    pub fn log_spaced(min: f64, max: f64, count: usize) -> Result<Self, SolverError> {
        if count == 0 || !(min > 0.0 && max >= min && max.is_finite()) {
            return Err(SolverError::InvalidGrid);
        }
        if count == 1 {
            return Self::new(alloc::vec![min]);
        }
        let (lo, hi) = (min.ln(), max.ln());
        let step = (hi - lo) / (count - 1) as f64;
        let candidates = (0..count)
            .map(|i| if i + 1 == count { max } else { (lo + step * i as f64).exp() })
            .collect();
        Self::new(candidates)
    }

    /// Log-spaced focal lengths covering horizontal fields of view from
    /// `fov_max` down to `fov_min` (radians) for an image `width` wide.
    pub fn for_fov(width: usize, fov_min: f64, fov_max: f64, count: usize) -> Result<Self, SolverError> {
        let half = width as f64 / 2.0;
        let f_min = half / (fov_max / 2.0).tan();
        let f_max = half / (fov_min / 2.0).tan();
        Self::log_spaced(f_min, f_max, count)
    }

    /// 512 candidates spanning 15 to 140 degrees of horizontal FoV.
    pub fn default_for(geometry: ImageGeometry) -> Self {
        Self::for_fov(geometry.width(), 15f64.to_radians(), 140f64.to_radians(), 512)
            .expect("default FoV range yields a valid grid")
    }

    pub fn candidates(&self) -> &[f64] {
        &self.candidates
    }

    /// Spacing between the two candidates that bracket `focal`; the nearest
    /// interval when `focal` lies outside the grid.
    pub fn local_spacing(&self, focal: f64) -> f64 {
        let c = &self.candidates;
        if c.len() < 2 {
            return 0.0;
        }
        let i = c.partition_point(|&x| x <= focal).clamp(1, c.len() - 1);
        c[i] - c[i - 1]
    }
}

/// Closed-form intrinsics from two pixel/ray correspondences.
pub fn minimal_solve(p1: PixelCoord, v1: [f64; 3], p2: PixelCoord, v2: [f64; 3]) -> Result<Intrinsics, SolverError> {
    let (v1x, v1y) = canonical(v1)?;
    let (v2x, v2y) = canonical(v2)?;
    if p1.x == p2.x || p1.y == p2.y || v1x == v2x || v1y == v2y {
        return Err(SolverError::DegenerateSample);
    }
    let fx = (p1.x - p2.x) / (v1x - v2x);
    let fy = (p1.y - p2.y) / (v1y - v2y);
    if !(fx.is_finite() && fy.is_finite() && fx > 0.0 && fy > 0.0) {
        return Err(SolverError::InvalidSolution);
    }
    let bx = 0.5 * ((p1.x - v1x * fx) + (p2.x - v2x * fx));
    let by = 0.5 * ((p1.y - v1y * fy) + (p2.y - v2y * fy));
    Intrinsics::new(fx, fy, bx, by).map_err(|_| SolverError::InvalidSolution)
}

fn canonical(v: [f64; 3]) -> Result<(f64, f64), SolverError> {
    if !(v.iter().all(|c| c.is_finite()) && v[2] > 0.0) {
        return Err(SolverError::ZeroVector);
    }
    if v[2] == 1.0 {
        Ok((v[0], v[1]))
    } else {
        Ok((v[0] / v[2], v[1] / v[2]))
    }
}

/// Angle between two rays, in `[0, pi]`.
pub fn angular_residual(observed: [f64; 3], model: [f64; 3]) -> Result<f64, SolverError> {
    let norm = |v: [f64; 3]| (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    let (na, nb) = (norm(observed), norm(model));
    if !(na.is_finite() && nb.is_finite() && na > 0.0 && nb > 0.0) {
        return Err(SolverError::ZeroVector);
    }
    Ok(ray_angle(observed, model))
}

/// atan2 of the cross and dot products; accurate near zero where
/// `acos` of the normalized dot product is not.
#[inline]
fn ray_angle(a: [f64; 3], b: [f64; 3]) -> f64 {
    let cx = a[1] * b[2] - a[2] * b[1];
    let cy = a[2] * b[0] - a[0] * b[2];
    let cz = a[0] * b[1] - a[1] * b[0];
    let cross = (cx * cx + cy * cy + cz * cz).sqrt();
    let dot = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    cross.atan2(dot)
}

/// Observed unit rays of a pixel subset together with their pixel
/// coordinates, laid out for the scoring loop.
struct ScoringSet {
    px: Vec<f64>,
    py: Vec<f64>,
    ux: Vec<f64>,
    uy: Vec<f64>,
    uz: Vec<f64>,
}

impl ScoringSet {
    fn new(map: &IncidentMap, indices: impl Iterator<Item = usize>) -> Self {
        let g = map.geometry();
        let data = map.data();
        let (lo, _) = indices.size_hint();
        let mut set = Self {
            px: Vec::with_capacity(lo),
            py: Vec::with_capacity(lo),
            ux: Vec::with_capacity(lo),
            uy: Vec::with_capacity(lo),
            uz: Vec::with_capacity(lo),
        };
        for i in indices {
            let (x, y) = g.coords(i);
            let (vx, vy) = (data[i][0] as f64, data[i][1] as f64);
            let n = (vx * vx + vy * vy + 1.0).sqrt();
            set.px.push(x as f64);
            set.py.push(y as f64);
            set.ux.push(vx / n);
            set.uy.push(vy / n);
            set.uz.push(1.0 / n);
        }
        set
    }

    fn len(&self) -> usize {
        self.px.len()
    }

    /// Pixels whose angle to the model ray is below the threshold with
    /// cosine `cos_thr`. Compares squared cosines, so no root per pixel.
    fn count_inliers(&self, k: &Intrinsics, cos_thr: f64) -> usize {
        let (ifx, ify) = (1.0 / k.fx, 1.0 / k.fy);
        let c2 = cos_thr * cos_thr;
        let mut count = 0usize;
        for i in 0..self.px.len() {
            let mx = (self.px[i] - k.bx) * ifx;
            let my = (self.py[i] - k.by) * ify;
            let dot = self.ux[i] * mx + self.uy[i] * my + self.uz[i];
            let n2 = mx * mx + my * my + 1.0;
            count += (dot > 0.0 && dot * dot > c2 * n2) as usize;
        }
        count
    }

    fn residuals(&self, k: &Intrinsics) -> Vec<f64> {
        (0..self.len())
            .map(|i| {
                let model = [(self.px[i] - k.bx) / k.fx, (self.py[i] - k.by) / k.fy, 1.0];
                ray_angle([self.ux[i], self.uy[i], self.uz[i]], model)
            })
            .collect()
    }

    /// Monotone stand-in for the residual angle: `1 - cos`.
    fn cosine_gaps(&self, k: &Intrinsics, out: &mut Vec<f64>) {
        out.clear();
        for i in 0..self.len() {
            let mx = (self.px[i] - k.bx) / k.fx;
            let my = (self.py[i] - k.by) / k.fy;
            let dot = self.ux[i] * mx + self.uy[i] * my + self.uz[i];
            out.push(1.0 - dot / (mx * mx + my * my + 1.0).sqrt());
        }
    }
}

fn scoring_indices(g: ImageGeometry) -> Vec<usize> {
    if g.width() * g.height() > 256 * 256 {
        stride_subsample(g.width(), g.height(), MAX_SCORING_PIXELS)
    } else {
        (0..g.pixel_count()).collect()
    }
}

/// Trial `index` draws its pixel pair from its own ChaCha stream, so any
/// trial can be evaluated in isolation and in any order.
fn trial_hypothesis(map: &IncidentMap, seed: u64, index: usize) -> Option<Intrinsics> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let g = map.geometry();
    let n = g.pixel_count();
    for _ in 0..MAX_RESAMPLES {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        let (ax, ay) = g.coords(a);
        let (bx, by) = g.coords(b);
        let p1 = PixelCoord::new(ax as f64, ay as f64);
        let p2 = PixelCoord::new(bx as f64, by as f64);
        match minimal_solve(p1, map.vector(ax, ay), p2, map.vector(bx, by)) {
            Ok(k) => return Some(k),
            Err(SolverError::DegenerateSample) => continue,
            Err(_) => return None,
        }
    }
    None
}

fn run_trials(map: &IncidentMap, set: &ScoringSet, cfg: &SolverConfig, parallel: bool) -> Option<(Intrinsics, usize)> {
    let cos_thr = cfg.inlier_threshold.cos();
    let score = |i: usize| trial_hypothesis(map, cfg.seed, i).map(|k| (k, set.count_inliers(&k, cos_thr)));
    let results: Vec<Option<(Intrinsics, usize)>> = if parallel {
        par_map(cfg.iterations, score)
    } else {
        (0..cfg.iterations).map(score).collect()
    };
    // Earliest trial wins ties, independent of evaluation order.
    let mut best: Option<(Intrinsics, usize)> = None;
    for (k, count) in results.into_iter().flatten() {
        if best.is_none_or(|(_, c)| count > c) {
            best = Some((k, count));
        }
    }
    best
}

#[cfg(feature = "parallel")]
fn par_map<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn par_map<T>(n: usize, f: impl Fn(usize) -> T) -> Vec<T> {
    (0..n).map(f).collect()
}

/// RANSAC over two-point minimal samples, refined by least squares on the
/// consensus set. Deterministic in `(map, cfg)`.
pub fn ransac_calibrate(map: &IncidentMap, cfg: &SolverConfig) -> Result<CalibrationEstimate, SolverError> {
    ransac_with(map, cfg, cfg!(feature = "parallel"))
}

fn ransac_with(map: &IncidentMap, cfg: &SolverConfig, parallel: bool) -> Result<CalibrationEstimate, SolverError> {
    cfg.validate()?;
    if !map.is_finite() {
        return Err(SolverError::NonFiniteMap);
    }
    let g = map.geometry();
    let set = ScoringSet::new(map, scoring_indices(g).into_iter());
    let no_consensus = |best_ratio| SolverError::NoConsensus { best_ratio, required: cfg.min_inlier_ratio };

    let (model, count) = run_trials(map, &set, cfg, parallel).ok_or(no_consensus(0.0))?;
    let ratio = count as f64 / set.len() as f64;
    if ratio < cfg.min_inlier_ratio {
        return Err(no_consensus(ratio));
    }

    let full = ScoringSet::new(map, 0..g.pixel_count());
    let mut k = model;
    let mut mask = inlier_mask(&full, &k, cfg.inlier_threshold);
    for _ in 0..REFINE_ROUNDS {
        match refine_least_squares(map, &k, &mask) {
            Ok(refined) => k = refined,
            Err(_) => break,
        }
        let next = inlier_mask(&full, &k, cfg.inlier_threshold);
        if next == mask {
            break;
        }
        mask = next;
    }
    Ok(summarize(&full, k, cfg.inlier_threshold))
}

fn inlier_mask(set: &ScoringSet, k: &Intrinsics, threshold: f64) -> Vec<bool> {
    set.residuals(k).into_iter().map(|r| r < threshold).collect()
}

fn summarize(set: &ScoringSet, k: Intrinsics, threshold: f64) -> CalibrationEstimate {
    let mut residuals = set.residuals(&k);
    let inliers = residuals.iter().filter(|r| **r < threshold).count();
    let median_residual = lower_median(&mut residuals).unwrap_or(0.0);
    CalibrationEstimate {
        intrinsics: k,
        inlier_ratio: inliers as f64 / set.len() as f64,
        median_residual,
    }
}

/// Centered 1-DoF calibration: `k = [f, f, w/2, h/2]` for each candidate,
/// scored by the lower-median angular residual. Ties go to the smaller
/// focal length.
pub fn enumerate_focal(map: &IncidentMap, grid: &FocalGrid) -> Result<CalibrationEstimate, SolverError> {
    if !map.is_finite() {
        return Err(SolverError::NonFiniteMap);
    }
    let g = map.geometry();
    let set = ScoringSet::new(map, scoring_indices(g).into_iter());
    let mut gaps = Vec::with_capacity(set.len());
    let scores: Vec<f64> = grid
        .candidates()
        .iter()
        .map(|&f| {
            let k = Intrinsics::centered(f, g).expect("grid candidates are positive");
            set.cosine_gaps(&k, &mut gaps);
            lower_median(&mut gaps).unwrap_or(f64::INFINITY)
        })
        .collect();
    let best = argmin_first(&scores).ok_or(SolverError::InvalidGrid)?;
    let k = Intrinsics::centered(grid.candidates()[best], g).expect("grid candidates are positive");
    Ok(summarize(&set, k, DEFAULT_INLIER_THRESHOLD))
}

/// Index of the smallest score; the earliest index wins ties.
pub fn argmin_first(scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, s) in scores.iter().enumerate() {
        if best.is_none_or(|b| *s < scores[b]) {
            best = Some(i);
        }
    }
    best
}

/// Dispatches on `cfg.assume_centered`: focal enumeration over the default
/// grid, or RANSAC.
pub fn calibrate(map: &IncidentMap, cfg: &SolverConfig) -> Result<CalibrationEstimate, SolverError> {
    if cfg.assume_centered {
        enumerate_focal(map, &FocalGrid::default_for(map.geometry()))
    } else {
        ransac_calibrate(map, cfg)
    }
}

/// Fits `x = fx * v_x + bx` and `y = fy * v_y + by` independently over the
/// masked pixels. `_initial` is the model the mask came from; the fit does
/// not depend on it.
pub fn refine_least_squares(map: &IncidentMap, _initial: &Intrinsics, inlier_mask: &[bool]) -> Result<Intrinsics, SolverError> {
    let g = map.geometry();
    if inlier_mask.len() != g.pixel_count() {
        return Err(SolverError::MaskSize { expected: g.pixel_count(), actual: inlier_mask.len() });
    }
    let mut xs = LineFit::default();
    let mut ys = LineFit::default();
    // Two passes: means first, then centered moments.
    for (i, _) in inlier_mask.iter().enumerate().filter(|(_, m)| **m) {
        let (x, y) = g.coords(i);
        let v = map.data()[i];
        xs.accumulate_mean(v[0] as f64, x as f64);
        ys.accumulate_mean(v[1] as f64, y as f64);
    }
    if xs.n < 2 {
        return Err(SolverError::RankDeficient);
    }
    xs.finish_mean();
    ys.finish_mean();
    for (i, _) in inlier_mask.iter().enumerate().filter(|(_, m)| **m) {
        let (x, y) = g.coords(i);
        let v = map.data()[i];
        xs.accumulate_moment(v[0] as f64, x as f64);
        ys.accumulate_moment(v[1] as f64, y as f64);
    }
    let (fx, bx) = xs.solve()?;
    let (fy, by) = ys.solve()?;
    Intrinsics::new(fx, fy, bx, by).map_err(|_| SolverError::InvalidSolution)
}

/// Ordinary least squares of `target = slope * input + intercept`.
#[derive(Default)]
struct LineFit {
    n: usize,
    mean_in: f64,
    mean_out: f64,
    s_ii: f64,
    s_io: f64,
    s_oo: f64,
}

impl LineFit {
    fn accumulate_mean(&mut self, input: f64, target: f64) {
        self.n += 1;
        self.mean_in += input;
        self.mean_out += target;
    }

    fn finish_mean(&mut self) {
        self.mean_in /= self.n as f64;
        self.mean_out /= self.n as f64;
    }

    fn accumulate_moment(&mut self, input: f64, target: f64) {
        let di = input - self.mean_in;
        let d_o = target - self.mean_out;
        self.s_ii += di * di;
        self.s_io += di * d_o;
        self.s_oo += d_o * d_o;
    }

    fn solve(&self) -> Result<(f64, f64), SolverError> {
        if !(self.s_ii > 0.0 && self.s_oo > 0.0) {
            return Err(SolverError::RankDeficient);
        }
        let slope = self.s_io / self.s_ii;
        if !(slope.is_finite() && slope > 0.0) {
            return Err(SolverError::InvalidSolution);
        }
        Ok((slope, self.mean_out - slope * self.mean_in))
    }
}
