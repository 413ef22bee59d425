//! Raster-space diffusion: DDPM noise schedule, forward noising,
//! deterministic (DDIM, eta = 0) reverse steps, multi-resolution noise,
//! and ensemble aggregation over a pluggable [`Denoiser`].
//!
//! Fields carry incidence or depth values directly; there is no learned
//! autoencoder, so every identity here is exact algebra on the raster.

use alloc::vec::Vec;
#[cfg(not(feature = "std"))]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::geometry::{ImageGeometry, IncidentMap};
use crate::metrics::DepthMap;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiffusionError {
    #[error("invalid schedule: need steps >= 1 and 0 <= beta_start <= beta_end < 1 (got {steps}, {beta_start}, {beta_end})")]
    InvalidSchedule { steps: usize, beta_start: f64, beta_end: f64 },
    #[error("timestep {t} outside 1..={steps}")]
    TimestepOutOfRange { t: usize, steps: usize },
    #[error("field shapes differ")]
    ShapeMismatch,
    #[error("field payload has {actual} values, shape needs {expected}")]
    PayloadSize { expected: usize, actual: usize },
    #[error("field must have at least one channel")]
    NoChannels,
    #[error("expected {expected} channels, got {actual}")]
    ChannelCount { expected: usize, actual: usize },
    #[error("signal coefficient is zero at t = {0}")]
    VanishingSignal(usize),
    #[error("noise coefficient is zero at t = {0}; the noise is unidentifiable")]
    VanishingNoise(usize),
    #[error("invalid sampler setting: {0}")]
    InvalidConfig(&'static str),
}

/// Cumulative signal retention `alpha_bar_t` for `t = 1..=T`; `alpha_bar_0 = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    alpha_bar: Vec<f64>,
}

pub const DEFAULT_STEPS: usize = 1000;
pub const DEFAULT_BETA_START: f64 = 0.00085;
pub const DEFAULT_BETA_END: f64 = 0.012;

impl Default for NoiseSchedule {
    fn default() -> Self {
        build_schedule(DEFAULT_STEPS, DEFAULT_BETA_START, DEFAULT_BETA_END).expect("default schedule is valid")
    }
}

impl NoiseSchedule {
    pub fn steps(&self) -> usize {
        self.alpha_bar.len()
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bar
    }

    /// `alpha_bar_t` for `t` in `0..=T`.
    pub fn alpha_bar(&self, t: usize) -> Result<f64, DiffusionError> {
        match t {
            0 => Ok(1.0),
            t if t <= self.steps() => Ok(self.alpha_bar[t - 1]),
            t => Err(DiffusionError::TimestepOutOfRange { t, steps: self.steps() }),
        }
    }

    /// `(sqrt(alpha_bar_t), sqrt(1 - alpha_bar_t))`.
    pub fn coefficients(&self, t: usize) -> Result<(f64, f64), DiffusionError> {
        let a = self.alpha_bar(t)?;
        Ok((a.sqrt(), (1.0 - a).sqrt()))
    }

    fn check_step(&self, t: usize) -> Result<(), DiffusionError> {
        if t == 0 || t > self.steps() {
            return Err(DiffusionError::TimestepOutOfRange { t, steps: self.steps() });
        }
        Ok(())
    }
}

/// Linear betas from `beta_start` to `beta_end`; `alpha_bar_t = prod (1 - beta_s)`.
pub fn build_schedule(steps: usize, beta_start: f64, beta_end: f64) -> Result<NoiseSchedule, DiffusionError> {
    let ok = steps >= 1 && beta_start >= 0.0 && beta_start <= beta_end && beta_end < 1.0;
    if !ok {
        return Err(DiffusionError::InvalidSchedule { steps, beta_start, beta_end });
    }
    let mut alpha_bar = Vec::with_capacity(steps);
    let mut acc = 1.0;
    for i in 0..steps {
        let frac = if steps == 1 { 0.0 } else { i as f64 / (steps - 1) as f64 };
        let beta = beta_start + (beta_end - beta_start) * frac;
        acc *= 1.0 - beta;
        alpha_bar.push(acc);
    }
    Ok(NoiseSchedule { alpha_bar })
}

/// Channel-interleaved, row-major real field.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentField {
    geometry: ImageGeometry,
    channels: usize,
    data: Vec<f64>,
}

impl LatentField {
    pub fn new(geometry: ImageGeometry, channels: usize, data: Vec<f64>) -> Result<Self, DiffusionError> {
        if channels == 0 {
            return Err(DiffusionError::NoChannels);
        }
        let expected = geometry.pixel_count() * channels;
        if data.len() != expected {
            return Err(DiffusionError::PayloadSize { expected, actual: data.len() });
        }
        Ok(Self { geometry, channels, data })
    }

    pub fn filled(geometry: ImageGeometry, channels: usize, value: f64) -> Result<Self, DiffusionError> {
        Self::new(geometry, channels, alloc::vec![value; geometry.pixel_count() * channels])
    }

    pub fn geometry(&self) -> ImageGeometry {
        self.geometry
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.geometry.width() + x) * self.channels + c]
    }

    pub fn same_shape(&self, other: &LatentField) -> bool {
        self.geometry == other.geometry && self.channels == other.channels
    }

    fn check_shape(&self, other: &LatentField) -> Result<(), DiffusionError> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(DiffusionError::ShapeMismatch)
        }
    }

    fn with_data(&self, data: Vec<f64>) -> Self {
        Self { geometry: self.geometry, channels: self.channels, data }
    }

    /// Two channels `(v_x, v_y)`.
    pub fn from_incident_map(map: &IncidentMap) -> Self {
        let data = map.data().iter().flat_map(|v| [v[0] as f64, v[1] as f64]).collect();
        Self { geometry: map.geometry(), channels: 2, data }
    }

    pub fn to_incident_map(&self) -> Result<IncidentMap, DiffusionError> {
        if self.channels != 2 {
            return Err(DiffusionError::ChannelCount { expected: 2, actual: self.channels });
        }
        let data = self.data.chunks_exact(2).map(|c| [c[0] as f32, c[1] as f32]).collect();
        Ok(IncidentMap::from_data(self.geometry, data).expect("shape checked"))
    }

    /// Channel concatenation, e.g. the joint incidence + depth latent.
    pub fn concat(parts: &[&LatentField]) -> Result<Self, DiffusionError> {
        let first = parts.first().ok_or(DiffusionError::NoChannels)?;
        if parts.iter().any(|p| p.geometry != first.geometry) {
            return Err(DiffusionError::ShapeMismatch);
        }
        let channels: usize = parts.iter().map(|p| p.channels).sum();
        let mut data = Vec::with_capacity(first.geometry.pixel_count() * channels);
        for px in 0..first.geometry.pixel_count() {
            for p in parts {
                data.extend_from_slice(&p.data[px * p.channels..(px + 1) * p.channels]);
            }
        }
        Ok(Self { geometry: first.geometry, channels, data })
    }

    /// Splits off the first `channels` channels.
    pub fn split(&self, channels: usize) -> Result<(Self, Self), DiffusionError> {
        if channels == 0 || channels >= self.channels {
            return Err(DiffusionError::ChannelCount { expected: self.channels, actual: channels });
        }
        let rest = self.channels - channels;
        let mut a = Vec::with_capacity(self.geometry.pixel_count() * channels);
        let mut b = Vec::with_capacity(self.geometry.pixel_count() * rest);
        for px in self.data.chunks_exact(self.channels) {
            a.extend_from_slice(&px[..channels]);
            b.extend_from_slice(&px[channels..]);
        }
        Ok((
            Self { geometry: self.geometry, channels, data: a },
            Self { geometry: self.geometry, channels: rest, data: b },
        ))
    }

    /// Root-mean-square element difference.
    pub fn rms_diff(&self, other: &LatentField) -> Result<f64, DiffusionError> {
        self.check_shape(other)?;
        let ss: f64 = self.data.iter().zip(&other.data).map(|(a, b)| (a - b) * (a - b)).sum();
        Ok((ss / self.data.len() as f64).sqrt())
    }
}

/// `z_t = sqrt(alpha_bar_t) z0 + sqrt(1 - alpha_bar_t) eps`.
pub fn forward_diffuse(z0: &LatentField, t: usize, eps: &LatentField, sched: &NoiseSchedule) -> Result<LatentField, DiffusionError> {
    z0.check_shape(eps)?;
    sched.check_step(t)?;
    let (s, n) = sched.coefficients(t)?;
    Ok(z0.with_data(z0.data.iter().zip(&eps.data).map(|(z, e)| s * z + n * e).collect()))
}

/// Deterministic reverse step from `t` to `t - 1`.
pub fn reverse_step(z_t: &LatentField, t: usize, eps_hat: &LatentField, sched: &NoiseSchedule) -> Result<LatentField, DiffusionError> {
    reverse_step_to(z_t, t, t.saturating_sub(1), eps_hat, sched)
}

/// Deterministic jump from `t` to any earlier `t_prev`: estimate the clean
/// field, then re-noise it to `t_prev` with the same noise estimate.
pub fn reverse_step_to(
    z_t: &LatentField,
    t: usize,
    t_prev: usize,
    eps_hat: &LatentField,
    sched: &NoiseSchedule,
) -> Result<LatentField, DiffusionError> {
    z_t.check_shape(eps_hat)?;
    sched.check_step(t)?;
    if t_prev >= t {
        return Err(DiffusionError::TimestepOutOfRange { t: t_prev, steps: t - 1 });
    }
    let (s, n) = sched.coefficients(t)?;
    if s == 0.0 {
        return Err(DiffusionError::VanishingSignal(t));
    }
    let (sp, np) = sched.coefficients(t_prev)?;
    let data = z_t
        .data
        .iter()
        .zip(&eps_hat.data)
        .map(|(z, e)| {
            let x0 = (z - n * e) / s;
            if t_prev == 0 {
                x0
            } else {
                sp * x0 + np * e
            }
        })
        .collect();
    Ok(z_t.with_data(data))
}

/// Noise predictor `eps_theta(z_t, t, condition)`. Output has the shape of
/// `z_t` and depends only on the arguments.
pub trait Denoiser: Sync {
    fn predict_noise(&self, z_t: &LatentField, t: usize, condition: &LatentField) -> Result<LatentField, DiffusionError>;
}

impl<D: Denoiser + ?Sized> Denoiser for &D {
    fn predict_noise(&self, z_t: &LatentField, t: usize, condition: &LatentField) -> Result<LatentField, DiffusionError> {
        (**self).predict_noise(z_t, t, condition)
    }
}

/// Test double returning the exact noise that makes `z_t` consistent with a
/// known clean field.
#[derive(Debug, Clone)]
pub struct OracleDenoiser {
    clean: LatentField,
    schedule: NoiseSchedule,
}

pub fn oracle_denoiser(z0: LatentField, schedule: NoiseSchedule) -> OracleDenoiser {
    OracleDenoiser { clean: z0, schedule }
}

fn implied_noise(z_t: &LatentField, target: &[f64], t: usize, sched: &NoiseSchedule) -> Result<LatentField, DiffusionError> {
    sched.check_step(t)?;
    let (s, n) = sched.coefficients(t)?;
    if n == 0.0 {
        return Err(DiffusionError::VanishingNoise(t));
    }
    Ok(z_t.with_data(z_t.data.iter().zip(target).map(|(z, c)| (z - s * c) / n).collect()))
}

impl Denoiser for OracleDenoiser {
    fn predict_noise(&self, z_t: &LatentField, t: usize, _condition: &LatentField) -> Result<LatentField, DiffusionError> {
        z_t.check_shape(&self.clean)?;
        implied_noise(z_t, &self.clean.data, t, &self.schedule)
    }
}

/// Oracle aimed at `z0 + sigma * n`, where the white noise `n` is a pure
/// function of the query. Distinct starting noises therefore end at
/// independently perturbed copies of `z0`.
#[derive(Debug, Clone)]
pub struct PerturbedOracleDenoiser {
    clean: LatentField,
    schedule: NoiseSchedule,
    sigma: f64,
}

impl PerturbedOracleDenoiser {
    pub fn new(z0: LatentField, schedule: NoiseSchedule, sigma: f64) -> Self {
        Self { clean: z0, schedule, sigma }
    }
}

fn fingerprint(field: &LatentField, t: usize) -> u64 {
    // FNV-1a over the bit patterns.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ t as u64;
    for v in &field.data {
        h ^= v.to_bits();
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl Denoiser for PerturbedOracleDenoiser {
    fn predict_noise(&self, z_t: &LatentField, t: usize, _condition: &LatentField) -> Result<LatentField, DiffusionError> {
        z_t.check_shape(&self.clean)?;
        let mut rng = ChaCha8Rng::seed_from_u64(fingerprint(z_t, t));
        let target: Vec<f64> = self
            .clean
            .data
            .iter()
            .map(|c| c + self.sigma * rng.sample::<f64, _>(StandardNormal))
            .collect();
        implied_noise(z_t, &target, t, &self.schedule)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultiresNoise {
    pub levels: usize,
    pub decay: f64,
}

impl Default for MultiresNoise {
    fn default() -> Self {
        Self { levels: 4, decay: 0.5 }
    }
}

/// Sum of white-noise pyramid levels: level `l` is drawn at `g / 2^l`
/// (clamped at 1x1), bilinearly upsampled, and weighted by `decay^l`. The
/// sum is rescaled to unit sample variance.
pub fn sample_multires_noise<R: Rng + ?Sized>(
    geometry: ImageGeometry,
    channels: usize,
    noise: MultiresNoise,
    rng: &mut R,
) -> Result<LatentField, DiffusionError> {
    if noise.levels == 0 {
        return Err(DiffusionError::InvalidConfig("noise levels must be at least 1"));
    }
    if !(noise.decay > 0.0 && noise.decay <= 1.0) {
        return Err(DiffusionError::InvalidConfig("noise decay must lie in (0, 1]"));
    }
    if channels == 0 {
        return Err(DiffusionError::NoChannels);
    }
    let (w, h) = (geometry.width(), geometry.height());
    let mut data: Vec<f64> = (0..w * h * channels).map(|_| rng.sample(StandardNormal)).collect();
    let mut weight = 1.0;
    for level in 1..noise.levels {
        weight *= noise.decay;
        let lw = (w >> level).max(1);
        let lh = (h >> level).max(1);
        let coarse: Vec<f64> = (0..lw * lh * channels).map(|_| rng.sample(StandardNormal)).collect();
        add_upsampled(&mut data, w, h, &coarse, lw, lh, channels, weight);
    }
    let n = data.len() as f64;
    let mean = data.iter().sum::<f64>() / n;
    let var = data.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    if var > 0.0 {
        let inv = 1.0 / var.sqrt();
        data.iter_mut().for_each(|v| *v *= inv);
    }
    LatentField::new(geometry, channels, data)
}

/// Bilinear upsampling with pixel-center alignment, accumulated into `dst`.
#[allow(clippy::too_many_arguments)]
fn add_upsampled(dst: &mut [f64], w: usize, h: usize, src: &[f64], sw: usize, sh: usize, channels: usize, weight: f64) {
    let axis = |i: usize, n: usize, sn: usize| -> (usize, usize, f64) {
        let pos = ((i as f64 + 0.5) * sn as f64 / n as f64 - 0.5).clamp(0.0, (sn - 1) as f64);
        let i0 = pos.floor() as usize;
        let i1 = (i0 + 1).min(sn - 1);
        (i0, i1, pos - i0 as f64)
    };
    for y in 0..h {
        let (y0, y1, fy) = axis(y, h, sh);
        for x in 0..w {
            let (x0, x1, fx) = axis(x, w, sw);
            for c in 0..channels {
                let at = |xx: usize, yy: usize| src[(yy * sw + xx) * channels + c];
                let top = at(x0, y0) * (1.0 - fx) + at(x1, y0) * fx;
                let bottom = at(x0, y1) * (1.0 - fx) + at(x1, y1) * fx;
                dst[(y * w + x) * channels + c] += weight * (top * (1.0 - fy) + bottom * fy);
            }
        }
    }
}

/// Mean squared error of each channel block, summed: channels
/// `0..incidence_channels` form the incidence block and the rest the depth
/// block. A block with no channels contributes nothing.
pub fn noise_loss(eps_pred: &LatentField, eps_true: &LatentField, incidence_channels: usize) -> Result<f64, DiffusionError> {
    eps_pred.check_shape(eps_true)?;
    let c = eps_pred.channels;
    if incidence_channels > c {
        return Err(DiffusionError::ChannelCount { expected: c, actual: incidence_channels });
    }
    let (mut a, mut b) = (0.0, 0.0);
    for (p, t) in eps_pred.data.chunks_exact(c).zip(eps_true.data.chunks_exact(c)) {
        for ch in 0..c {
            let d = p[ch] - t[ch];
            if ch < incidence_channels {
                a += d * d;
            } else {
                b += d * d;
            }
        }
    }
    let px = eps_pred.geometry.pixel_count() as f64;
    let mut loss = 0.0;
    if incidence_channels > 0 {
        loss += a / (px * incidence_channels as f64);
    }
    if incidence_channels < c {
        loss += b / (px * (c - incidence_channels) as f64);
    }
    Ok(loss)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerConfig {
    /// Number of reverse steps, strided evenly over `T..=1`.
    pub steps: usize,
    /// Channels of the generated field.
    pub channels: usize,
    pub noise: MultiresNoise,
}

impl SamplerConfig {
    pub fn new(steps: usize, channels: usize) -> Self {
        Self { steps, channels, noise: MultiresNoise::default() }
    }
}

/// Descending timesteps `T = t_0 > t_1 > ... >= 1` for a strided chain.
pub fn strided_timesteps(total: usize, steps: usize) -> Result<Vec<usize>, DiffusionError> {
    if steps == 0 || steps > total {
        return Err(DiffusionError::InvalidConfig("steps must lie in 1..=T"));
    }
    Ok((0..steps).map(|i| total - i * total / steps).collect())
}

/// Runs the strided deterministic chain from multi-resolution noise down to
/// `t = 0`.
pub fn generate<D: Denoiser + ?Sized, R: Rng + ?Sized>(
    den: &D,
    condition: &LatentField,
    sched: &NoiseSchedule,
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Result<LatentField, DiffusionError> {
    let ts = strided_timesteps(sched.steps(), cfg.steps)?;
    let mut z = sample_multires_noise(condition.geometry, cfg.channels, cfg.noise, rng)?;
    for (i, &t) in ts.iter().enumerate() {
        let t_prev = ts.get(i + 1).copied().unwrap_or(0);
        let eps = den.predict_noise(&z, t, condition)?;
        if !eps.same_shape(&z) {
            return Err(DiffusionError::ShapeMismatch);
        }
        z = reverse_step_to(&z, t, t_prev, &eps, sched)?;
    }
    Ok(z)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Aggregation {
    #[default]
    Mean,
    Median,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleResult {
    /// Per-element aggregate (mean by default).
    pub mean: LatentField,
    /// Per-element sample standard deviation; zero for a single member.
    pub stddev: LatentField,
    pub size: usize,
}

/// Member `m` draws its starting noise from stream `m` of a ChaCha
/// generator keyed by `seed`; member 0 matches [`generate`] with
/// `ChaCha8Rng::seed_from_u64(seed)`.
pub fn member_rng(seed: u64, member: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(member as u64);
    rng
}

pub fn ensemble_generate<D: Denoiser + ?Sized>(
    den: &D,
    condition: &LatentField,
    size: usize,
    sched: &NoiseSchedule,
    cfg: &SamplerConfig,
    seed: u64,
    aggregation: Aggregation,
) -> Result<EnsembleResult, DiffusionError> {
    if size == 0 {
        return Err(DiffusionError::InvalidConfig("ensemble size must be at least 1"));
    }
    let run = |m: usize| generate(den, condition, sched, cfg, &mut member_rng(seed, m));
    let members = collect_members(size, run)?;
    Ok(aggregate(&members, aggregation))
}

#[cfg(feature = "parallel")]
fn collect_members<F>(size: usize, run: F) -> Result<Vec<LatentField>, DiffusionError>
where
    F: Fn(usize) -> Result<LatentField, DiffusionError> + Sync + Send,
{
    use rayon::prelude::*;
    (0..size).into_par_iter().map(run).collect()
}

#[cfg(not(feature = "parallel"))]
fn collect_members<F>(size: usize, run: F) -> Result<Vec<LatentField>, DiffusionError>
where
    F: Fn(usize) -> Result<LatentField, DiffusionError>,
{
    (0..size).map(run).collect()
}

fn aggregate(members: &[LatentField], aggregation: Aggregation) -> EnsembleResult {
    let first = &members[0];
    let k = members.len();
    let len = first.data.len();
    let mut center = Vec::with_capacity(len);
    let mut spread = Vec::with_capacity(len);
    let mut column = Vec::with_capacity(k);
    for i in 0..len {
        column.clear();
        column.extend(members.iter().map(|m| m.data[i]));
        let mean = column.iter().sum::<f64>() / k as f64;
        let sd = if k > 1 {
            (column.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (k - 1) as f64).sqrt()
        } else {
            0.0
        };
        let c = match aggregation {
            Aggregation::Mean => mean,
            Aggregation::Median => {
                column.sort_by(f64::total_cmp);
                if k % 2 == 1 {
                    column[k / 2]
                } else {
                    0.5 * (column[k / 2 - 1] + column[k / 2])
                }
            }
        };
        center.push(c);
        spread.push(sd);
    }
    EnsembleResult { mean: first.with_data(center), stddev: first.with_data(spread), size: k }
}

/// Replicates a depth map into three identical channels; invalid pixels
/// carry NaN.
pub fn depth_tri_encode(depth: &DepthMap) -> LatentField {
    let data = depth
        .values()
        .iter()
        .zip(depth.mask())
        .flat_map(|(v, m)| {
            let d = if *m { *v as f64 } else { f64::NAN };
            [d, d, d]
        })
        .collect();
    LatentField { geometry: depth.geometry(), channels: 3, data }
}

/// Per-pixel mean of three channels.
pub fn depth_tri_decode(field: &LatentField) -> Result<DepthMap, DiffusionError> {
    if field.channels != 3 {
        return Err(DiffusionError::ChannelCount { expected: 3, actual: field.channels });
    }
    let values = field.data.chunks_exact(3).map(|c| ((c[0] + c[1] + c[2]) / 3.0) as f32).collect();
    Ok(DepthMap::new(field.geometry, values).expect("shape checked"))
}
