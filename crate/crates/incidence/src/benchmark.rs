//! Synthetic calibration benchmark: for every fixture, noise setting, and
//! trial, synthesize a map, degrade it, calibrate, and score against the
//! known intrinsics.

use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use incidence_core::geometry::{resize_intrinsics, synthesize_incident_map};
use incidence_core::metrics::calib_error;
use incidence_core::solver::calibrate;
use incidence_core::SolverConfig;
use serde::Serialize;
use thiserror::Error;

use crate::perturb::{perturb_map, PerturbConfig};
use crate::rasterio::fixtures::{fixture_intrinsics, UnknownFixture};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoiseSetting {
    pub sigma: f64,
    pub frac: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("bad noise setting `{0}`: expected sigma:frac with sigma >= 0 and frac in [0, 1]")]
pub struct NoiseSettingError(pub String);

impl FromStr for NoiseSetting {
    type Err = NoiseSettingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || NoiseSettingError(s.to_string());
        let (a, b) = s.split_once(':').ok_or_else(err)?;
        let sigma: f64 = a.trim().parse().map_err(|_| err())?;
        let frac: f64 = b.trim().parse().map_err(|_| err())?;
        if !(sigma.is_finite() && sigma >= 0.0 && (0.0..=1.0).contains(&frac)) {
            return Err(err());
        }
        Ok(Self { sigma, frac })
    }
}

/// Parses a comma-separated list such as `0.002:0,0.01:0.2`.
pub fn parse_noise_grid(spec: &str) -> Result<Vec<NoiseSetting>, NoiseSettingError> {
    let settings = spec.split(',').filter(|s| !s.trim().is_empty()).map(str::parse).collect::<Result<Vec<_>, _>>()?;
    if settings.is_empty() {
        return Err(NoiseSettingError(spec.to_string()));
    }
    Ok(settings)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkConfig {
    pub fixtures: Vec<String>,
    pub settings: Vec<NoiseSetting>,
    pub trials: usize,
    pub seed: u64,
    /// Resize factor applied to each fixture's native resolution.
    pub scale: f64,
    pub solver: SolverConfig,
    /// Record wall-clock time per trial. Off makes reports byte-reproducible.
    pub timing: bool,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            fixtures: vec!["scannet".into()],
            settings: vec![NoiseSetting { sigma: 0.0, frac: 0.0 }],
            trials: 1,
            seed: 0,
            scale: 1.0,
            solver: SolverConfig::default(),
            timing: true,
        }
    }
}

#[derive(Debug, Error)]
pub enum BenchmarkError {
    #[error(transparent)]
    UnknownFixture(#[from] UnknownFixture),
    #[error("fixture {fixture}: {reason}")]
    Geometry { fixture: String, reason: String },
    #[error("trials must be at least 1")]
    NoTrials,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub fixture: String,
    pub setting: usize,
    pub trial: usize,
    pub seed: u64,
    pub sigma: f64,
    pub frac: f64,
    pub e_f: Option<f64>,
    pub e_b: Option<f64>,
    pub inlier_ratio: Option<f64>,
    pub runtime_ms: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    /// `None` for the overall row.
    pub fixture: Option<String>,
    pub sigma: Option<f64>,
    pub frac: Option<f64>,
    pub trials: usize,
    pub failures: usize,
    pub median_e_f: Option<f64>,
    pub median_e_b: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkReport {
    pub seed: u64,
    pub scale: f64,
    pub assume_centered: bool,
    pub iterations: usize,
    pub inlier_threshold: f64,
    pub records: Vec<TrialRecord>,
    pub groups: Vec<Aggregate>,
    pub overall: Aggregate,
}

impl BenchmarkReport {
    pub fn failures(&self) -> usize {
        self.records.iter().filter(|r| r.error.is_some()).count()
    }

    pub fn to_json(&self) -> Result<String, serde_json::Error> {
        serde_json::to_string_pretty(self)
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.records {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes `path` as JSON and the per-trial rows next to it with a
    /// `.csv` extension.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), BenchmarkError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?)?;
        self.write_csv(std::fs::File::create(path.with_extension("csv"))?)?;
        Ok(())
    }
}

/// SplitMix64 finalizer over the trial coordinates; distinct trials get
/// well-separated seeds.
pub fn trial_seed(base: u64, fixture: usize, setting: usize, trial: usize) -> u64 {
    let mut z = base;
    for part in [fixture as u64, setting as u64, trial as u64] {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(part);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

pub fn run_benchmark(cfg: &BenchmarkConfig) -> Result<BenchmarkReport, BenchmarkError> {
    if cfg.trials == 0 {
        return Err(BenchmarkError::NoTrials);
    }
    let fixtures = cfg.fixtures.iter().map(|n| fixture_intrinsics(n)).collect::<Result<Vec<_>, _>>()?;
    let mut records = Vec::new();
    for (fi, fixture) in fixtures.iter().enumerate() {
        let (k, g) = resize_intrinsics(&fixture.intrinsics, fixture.geometry(), cfg.scale)
            .map_err(|e| BenchmarkError::Geometry { fixture: fixture.name.into(), reason: e.to_string() })?;
        let clean = synthesize_incident_map(&k, g);
        for (si, setting) in cfg.settings.iter().enumerate() {
            for trial in 0..cfg.trials {
                let seed = trial_seed(cfg.seed, fi, si, trial);
                let start = Instant::now();
                let outcome = perturb_map(&clean, &PerturbConfig { angle_noise: setting.sigma, outlier_frac: setting.frac, seed })
                    .map_err(|e| e.to_string())
                    .and_then(|m| calibrate(&m, &SolverConfig { seed, ..cfg.solver }).map_err(|e| e.to_string()));
                let runtime_ms = cfg.timing.then(|| start.elapsed().as_secs_f64() * 1e3);
                let mut rec = TrialRecord {
                    fixture: fixture.name.into(),
                    setting: si,
                    trial,
                    seed,
                    sigma: setting.sigma,
                    frac: setting.frac,
                    e_f: None,
                    e_b: None,
                    inlier_ratio: None,
                    runtime_ms,
                    error: None,
                };
                match outcome {
                    Ok(est) => {
                        let err = calib_error(&k, &est.intrinsics, g);
                        rec.e_f = Some(err.e_f);
                        rec.e_b = Some(err.e_b);
                        rec.inlier_ratio = Some(est.inlier_ratio);
                    }
                    Err(e) => rec.error = Some(e),
                }
                records.push(rec);
            }
        }
    }
    let groups = records
        .chunk_by(|a, b| a.fixture == b.fixture && a.setting == b.setting)
        .map(|rows| Aggregate { fixture: Some(rows[0].fixture.clone()), sigma: Some(rows[0].sigma), frac: Some(rows[0].frac), ..aggregate(rows) })
        .collect();
    let overall = aggregate(&records);
    Ok(BenchmarkReport {
        seed: cfg.seed,
        scale: cfg.scale,
        assume_centered: cfg.solver.assume_centered,
        iterations: cfg.solver.iterations,
        inlier_threshold: cfg.solver.inlier_threshold,
        records,
        groups,
        overall,
    })
}

/// Medians over the successful rows (lower median for even counts).
pub fn aggregate(rows: &[TrialRecord]) -> Aggregate {
    let median = |f: fn(&TrialRecord) -> Option<f64>| {
        let mut v: Vec<f64> = rows.iter().filter_map(f).collect();
        v.sort_by(f64::total_cmp);
        (!v.is_empty()).then(|| v[(v.len() - 1) / 2])
    };
    Aggregate {
        fixture: None,
        sigma: None,
        frac: None,
        trials: rows.len(),
        failures: rows.iter().filter(|r| r.error.is_some()).count(),
        median_e_f: median(|r| r.e_f),
        median_e_b: median(|r| r.e_b),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(settings: &str) -> BenchmarkConfig {
        BenchmarkConfig {
            fixtures: vec!["nyu".into(), "kitti".into()],
            settings: parse_noise_grid(settings).unwrap(),
            trials: 3,
            seed: 11,
            scale: 0.25,
            solver: SolverConfig { iterations: 256, ..SolverConfig::default() },
            timing: false,
        }
    }

    #[test]
    fn parses_noise_grid() {
        assert_eq!(
            parse_noise_grid("0.002:0,0.01:0.2").unwrap(),
            vec![NoiseSetting { sigma: 0.002, frac: 0.0 }, NoiseSetting { sigma: 0.01, frac: 0.2 }]
        );
        assert!(parse_noise_grid("0.01").is_err());
        assert!(parse_noise_grid("0.01:2").is_err());
        assert!(parse_noise_grid("").is_err());
    }

    #[test]
    fn zero_noise_rows_are_exact() {
        let report = run_benchmark(&small("0:0")).unwrap();
        assert_eq!(report.records.len(), 6);
        for r in &report.records {
            assert!(r.e_f.unwrap() < 1e-6 && r.e_b.unwrap() < 1e-6, "{r:?}");
        }
    }

    #[test]
    fn aggregates_match_rows_and_reports_are_reproducible() {
        let cfg = small("0:0,0.005:0.1");
        let report = run_benchmark(&cfg).unwrap();
        assert_eq!(report.groups.len(), 4);
        for g in &report.groups {
            let rows: Vec<_> = report
                .records
                .iter()
                .filter(|r| Some(&r.fixture) == g.fixture.as_ref() && Some(r.sigma) == g.sigma && Some(r.frac) == g.frac)
                .cloned()
                .collect();
            let again = aggregate(&rows);
            assert_eq!((again.median_e_f, again.median_e_b, again.trials), (g.median_e_f, g.median_e_b, g.trials));
        }
        assert_eq!(report.overall, aggregate(&report.records));
        assert_eq!(report.to_json().unwrap(), run_benchmark(&cfg).unwrap().to_json().unwrap());
    }

    #[test]
    fn trial_seeds_are_distinct() {
        let mut seeds: Vec<u64> = (0..4).flat_map(|f| (0..4).flat_map(move |s| (0..8).map(move |t| trial_seed(3, f, s, t)))).collect();
        seeds.sort_unstable();
        seeds.dedup();
        assert_eq!(seeds.len(), 128);
    }

    #[test]
    fn unknown_fixture_is_an_error() {
        let cfg = BenchmarkConfig { fixtures: vec!["nosuch".into()], ..small("0:0") };
        assert!(matches!(run_benchmark(&cfg), Err(BenchmarkError::UnknownFixture(_))));
    }
}
