//! The `incidence` command-line tool. Results go to stdout as JSON,
//! diagnostics to stderr.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use incidence_core::geometry::synthesize_incident_map;
use incidence_core::metrics::{align_depth, calib_error, AlignMode, AffineAlignment};
use incidence_core::recon::unproject;
use incidence_core::solver::{calibrate, CalibrationEstimate, DEFAULT_INLIER_THRESHOLD};
use incidence_core::{ImageGeometry, Intrinsics, SolverConfig};
use serde_json::{json, Value};

use crate::benchmark::{parse_noise_grid, run_benchmark, BenchmarkConfig};
use crate::perturb::{perturb_map, PerturbConfig};
use crate::rasterio::fixtures::{fixture_intrinsics, FIXTURES};
use crate::rasterio::json::intrinsics_value;
use crate::rasterio::png::export_png16;
use crate::rasterio::{parse_intrinsics_json, read_map, write_map, write_ply};

#[derive(Debug, Parser)]
#[command(name = "incidence", version, about = "Camera calibration from incident maps")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the exact incident map of a pinhole camera.
    Synth(SynthArgs),
    /// Add ray noise and outliers to an incident map.
    Perturb(PerturbArgs),
    /// Recover intrinsics from an incident map.
    Calibrate(CalibrateArgs),
    /// Turn a depth map into a PLY point cloud.
    Reconstruct(ReconstructArgs),
    /// Run the synthetic calibration benchmark.
    Benchmark(BenchmarkArgs),
    /// List the built-in dataset intrinsics.
    Fixtures,
    /// Write a 16-bit PNG preview of an IMAP or DMAP file.
    ExportPng(ExportPngArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, conflicts_with = "intrinsics_json", required_unless_present = "intrinsics_json")]
    pub fixture: Option<String>,
    /// File holding {"fx","fy","bx","by","width","height"}.
    #[arg(long)]
    pub intrinsics_json: Option<PathBuf>,
    /// Output size as WxH; defaults to the source's own size.
    #[arg(long, value_parser = parse_size)]
    pub size: Option<ImageGeometry>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PerturbArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Standard deviation of the per-ray rotation, radians.
    #[arg(long, default_value_t = 0.0)]
    pub angle_noise: f64,
    #[arg(long, default_value_t = 0.0)]
    pub outlier_frac: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Assume a centered principal point and fx = fy.
    #[arg(long)]
    pub asm: bool,
    #[arg(long, default_value_t = SolverConfig::default().iterations)]
    pub iters: usize,
    /// Inlier threshold, radians.
    #[arg(long, default_value_t = DEFAULT_INLIER_THRESHOLD)]
    pub threshold: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Ground-truth intrinsics JSON; adds e_f and e_b to the output.
    #[arg(long)]
    pub gt: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AlignArg {
    Scale,
    ScaleShift,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    #[arg(long)]
    pub depth: PathBuf,
    #[arg(long, conflicts_with = "from_imap", required_unless_present = "from_imap")]
    pub intrinsics: Option<PathBuf>,
    /// Calibrate this incident map and use the result.
    #[arg(long)]
    pub from_imap: Option<PathBuf>,
    #[arg(long, requires = "from_imap")]
    pub asm: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Reference depth used to fix the scale (and shift) of the input.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "scale-shift", requires = "reference")]
    pub align: AlignArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    /// Comma-separated fixture names.
    #[arg(long, value_delimiter = ',', default_value = "scannet")]
    pub fixtures: Vec<String>,
    /// Comma-separated sigma:frac pairs.
    #[arg(long, default_value = "0:0")]
    pub noise_grid: String,
    #[arg(long, default_value_t = 5)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Resize factor applied to each fixture's native size.
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    #[arg(long)]
    pub asm: bool,
    #[arg(long, default_value_t = SolverConfig::default().iterations)]
    pub iters: usize,
    /// Leave runtime_ms empty so identical runs give identical files.
    #[arg(long)]
    pub no_timing: bool,
    /// Report path; the CSV twin is written beside it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExportPngArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Normalize rays to unit length before quantizing.
    #[arg(long)]
    pub unit: bool,
}

fn parse_size(s: &str) -> Result<ImageGeometry, String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or_else(|| format!("`{s}` is not WxH"))?;
    let w = w.parse().map_err(|_| format!("bad width in `{s}`"))?;
    let h = h.parse().map_err(|_| format!("bad height in `{s}`"))?;
    ImageGeometry::new(w, h).map_err(|e| e.to_string())
}

fn read_intrinsics(path: &PathBuf) -> Result<(Intrinsics, ImageGeometry)> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_intrinsics_json(&text).with_context(|| format!("parsing {}", path.display()))
}

fn print(value: &Value) {
    println!("{}", serde_json::to_string_pretty(value).expect("JSON values serialize"));
}

fn estimate_json(est: &CalibrationEstimate, g: ImageGeometry, asm: bool) -> Value {
    let mut v = intrinsics_value(&est.intrinsics, g);
    v["mode"] = json!(if asm { "centered" } else { "ransac" });
    v["inlier_ratio"] = json!(est.inlier_ratio);
    v["median_residual"] = json!(est.median_residual);
    v
}

fn synth(args: SynthArgs) -> Result<()> {
    let (k, native) = match (&args.fixture, &args.intrinsics_json) {
        (Some(name), None) => {
            let f = fixture_intrinsics(name)?;
            (f.intrinsics, f.geometry())
        }
        (None, Some(path)) => read_intrinsics(path)?,
        _ => bail!("give exactly one of --fixture or --intrinsics-json"),
    };
    let g = args.size.unwrap_or(native);
    write_map(&args.out, &synthesize_incident_map(&k, g).into()).with_context(|| format!("writing {}", args.out.display()))?;
    print(&intrinsics_value(&k, g));
    Ok(())
}

fn perturb(args: PerturbArgs) -> Result<()> {
    let map = read_map(&args.input).with_context(|| format!("reading {}", args.input.display()))?.into_incident()?;
    let cfg = PerturbConfig { angle_noise: args.angle_noise, outlier_frac: args.outlier_frac, seed: args.seed };
    let out = perturb_map(&map, &cfg)?;
    write_map(&args.out, &out.into()).with_context(|| format!("writing {}", args.out.display()))?;
    print(&json!({ "angle_noise": cfg.angle_noise, "outlier_frac": cfg.outlier_frac, "seed": cfg.seed }));
    Ok(())
}

fn calibrate_cmd(args: CalibrateArgs) -> Result<()> {
    let map = read_map(&args.input).with_context(|| format!("reading {}", args.input.display()))?.into_incident()?;
    let cfg = SolverConfig {
        iterations: args.iters,
        inlier_threshold: args.threshold,
        seed: args.seed,
        assume_centered: args.asm,
        ..SolverConfig::default()
    };
    let est = calibrate(&map, &cfg).context("calibration failed")?;
    let g = map.geometry();
    let mut out = estimate_json(&est, g, args.asm);
    if let Some(path) = &args.gt {
        let (gt, gt_g) = read_intrinsics(path)?;
        if gt_g != g {
            eprintln!("warning: ground truth is for {}x{}, map is {}x{}", gt_g.width(), gt_g.height(), g.width(), g.height());
        }
        let err = calib_error(&gt, &est.intrinsics, g);
        out["e_f"] = json!(err.e_f);
        out["e_b"] = json!(err.e_b);
    }
    print(&out);
    Ok(())
}

fn reconstruct(args: ReconstructArgs) -> Result<()> {
    let depth = read_map(&args.depth).with_context(|| format!("reading {}", args.depth.display()))?.into_depth()?;
    let g = depth.geometry();
    let mut out = json!({});
    let k = if let Some(path) = &args.intrinsics {
        let (k, kg) = read_intrinsics(path)?;
        ensure!(kg == g, "geometry mismatch: intrinsics are for {}x{}, depth is {}x{}", kg.width(), kg.height(), g.width(), g.height());
        k
    } else {
        let path = args.from_imap.as_ref().expect("clap requires one source");
        let map = read_map(path).with_context(|| format!("reading {}", path.display()))?.into_incident()?;
        let mg = map.geometry();
        ensure!(mg == g, "geometry mismatch: incident map is {}x{}, depth is {}x{}", mg.width(), mg.height(), g.width(), g.height());
        let cfg = SolverConfig { seed: args.seed, assume_centered: args.asm, ..SolverConfig::default() };
        let est = calibrate(&map, &cfg).context("calibration failed")?;
        out["calibration"] = estimate_json(&est, g, args.asm);
        est.intrinsics
    };
    let (depth, alignment) = match &args.reference {
        Some(path) => {
            let reference = read_map(path).with_context(|| format!("reading {}", path.display()))?.into_depth()?;
            ensure!(reference.geometry() == g, "geometry mismatch between depth and reference");
            let mode = match args.align {
                AlignArg::Scale => AlignMode::Scale,
                AlignArg::ScaleShift => AlignMode::ScaleShift,
            };
            let a = align_depth(&depth, &reference, mode)?;
            (a.apply(&depth), a)
        }
        None => {
            eprintln!("note: no --reference given; depth used as-is (scale 1, shift 0)");
            (depth, AffineAlignment { scale: 1.0, shift: 0.0 })
        }
    };
    let cloud = unproject(&depth, &k)?;
    write_ply(&args.out, &cloud).with_context(|| format!("writing {}", args.out.display()))?;
    out["intrinsics"] = intrinsics_value(&k, g);
    out["points"] = json!(cloud.len());
    out["scale"] = json!(alignment.scale);
    out["shift"] = json!(alignment.shift);
    out["aligned"] = json!(args.reference.is_some());
    print(&out);
    Ok(())
}

fn benchmark(args: BenchmarkArgs) -> Result<ExitCode> {
    let cfg = BenchmarkConfig {
        fixtures: args.fixtures,
        settings: parse_noise_grid(&args.noise_grid)?,
        trials: args.trials,
        seed: args.seed,
        scale: args.scale,
        solver: SolverConfig { iterations: args.iters, assume_centered: args.asm, ..SolverConfig::default() },
        timing: !args.no_timing,
    };
    let report = run_benchmark(&cfg)?;
    report.write(&args.out).with_context(|| format!("writing {}", args.out.display()))?;
    for r in report.records.iter().filter(|r| r.error.is_some()) {
        eprintln!("trial failed: {} setting {} trial {}: {}", r.fixture, r.setting, r.trial, r.error.as_deref().unwrap_or(""));
    }
    print(&json!({ "groups": report.groups, "overall": report.overall, "failures": report.failures() }));
    Ok(if report.failures() == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn fixtures() {
    let list: Vec<Value> = FIXTURES
        .iter()
        .map(|f| {
            let mut v = intrinsics_value(&f.intrinsics, f.geometry());
            v["name"] = json!(f.name);
            v["source"] = json!(f.source);
            v
        })
        .collect();
    print(&Value::Array(list));
}

fn export_png(args: ExportPngArgs) -> Result<()> {
    let map = read_map(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    let sidecar = export_png16(&map, &args.out, args.unit)?;
    print(&serde_json::to_value(sidecar)?);
    Ok(())
}

pub fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Synth(a) => synth(a)?,
        Command::Perturb(a) => perturb(a)?,
        Command::Calibrate(a) => calibrate_cmd(a)?,
        Command::Reconstruct(a) => reconstruct(a)?,
        Command::Benchmark(a) => return benchmark(a),
        Command::Fixtures => fixtures(),
        Command::ExportPng(a) => export_png(a)?,
    }
    Ok(ExitCode::SUCCESS)
}

pub fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn size_parsing() {
        assert_eq!(parse_size("1296x968").unwrap(), ImageGeometry::new(1296, 968).unwrap());
        assert!(parse_size("12").is_err());
        assert!(parse_size("1x5").is_err());
    }
}
