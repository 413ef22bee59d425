//! Synthetic degradation of incident maps: small random rotations of every
//! ray plus a fraction of gross outliers.

use incidence_core::IncidentMap;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

/// Outlier rays are uniform over the spherical cap of this half-angle.
pub const OUTLIER_CAP: f64 = std::f64::consts::FRAC_PI_3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbConfig {
    /// Standard deviation of the per-ray rotation angle, radians.
    pub angle_noise: f64,
    pub outlier_frac: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PerturbError {
    #[error("outlier fraction {0} outside [0, 1]")]
    OutlierFraction(f64),
    #[error("angle noise {0} must be finite and non-negative")]
    AngleNoise(f64),
}

pub fn perturb_map(map: &IncidentMap, cfg: &PerturbConfig) -> Result<IncidentMap, PerturbError> {
    if !(0.0..=1.0).contains(&cfg.outlier_frac) {
        return Err(PerturbError::OutlierFraction(cfg.outlier_frac));
    }
    if !(cfg.angle_noise.is_finite() && cfg.angle_noise >= 0.0) {
        return Err(PerturbError::AngleNoise(cfg.angle_noise));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = map.clone();
    let n = out.data().len();
    let outliers = (cfg.outlier_frac * n as f64).round() as usize;
    let mut is_outlier = vec![false; n];
    for i in index::sample(&mut rng, n, outliers.min(n)) {
        is_outlier[i] = true;
    }
    let angle = Normal::new(0.0, cfg.angle_noise).expect("checked above");
    for (v, outlier) in out.data_mut().iter_mut().zip(is_outlier) {
        if outlier {
            *v = to_plane(cap_ray(&mut rng));
        } else if cfg.angle_noise > 0.0 {
            let u = normalize([v[0] as f64, v[1] as f64, 1.0]);
            let (e1, e2) = orthonormal_basis(u);
            *v = loop {
                // Rotation about an axis perpendicular to the ray, so the
                // ray moves by exactly |θ|.
                let phi = rng.random_range(0.0..std::f64::consts::TAU);
                let (s, c) = angle.sample(&mut rng).sin_cos();
                let (sp, cp) = phi.sin_cos();
                let r: [f64; 3] = core::array::from_fn(|i| u[i] * c + (e1[i] * cp + e2[i] * sp) * s);
                if r[2] > 1e-6 {
                    break to_plane(r);
                }
            };
        }
    }
    Ok(out)
}

fn cap_ray<R: Rng>(rng: &mut R) -> [f64; 3] {
    let cos_t = rng.random_range(OUTLIER_CAP.cos()..=1.0);
    let sin_t = (1.0 - cos_t * cos_t).max(0.0).sqrt();
    let phi = rng.random_range(0.0..std::f64::consts::TAU);
    [sin_t * phi.cos(), sin_t * phi.sin(), cos_t]
}

fn normalize(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

fn to_plane(v: [f64; 3]) -> [f32; 2] {
    [(v[0] / v[2]) as f32, (v[1] / v[2]) as f32]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

/// Two unit vectors completing `u` (unit, z > 0) to an orthonormal frame.
fn orthonormal_basis(u: [f64; 3]) -> ([f64; 3], [f64; 3]) {
    let e1 = normalize(cross([0.0, 1.0, 0.0], u));
    (e1, cross(u, e1))
}
