use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use incidence::rasterio::{read_map, read_ply, write_map, RasterMap};
use incidence_core::metrics::chamfer_l1;
use incidence_core::recon::reproject;
use incidence_core::{DepthMap, ImageGeometry, Intrinsics, PointCloud};
use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_incidence")).args(args).output().expect("binary runs")
}

fn ok_json(args: &[&str]) -> Value {
    let out = run(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Dir(tempfile::TempDir);

impl Dir {
    fn new() -> Self {
        Dir(tempfile::tempdir().unwrap())
    }
    fn path(&self, name: &str) -> PathBuf {
        self.0.path().join(name)
    }
}

fn write_json(path: &Path, v: &Value) {
    std::fs::write(path, v.to_string()).unwrap();
}

#[test]
fn synth_writes_centered_scannet_map() {
    let d = Dir::new();
    let m = d.path("m.imap");
    let printed = ok_json(&["synth", "--fixture", "scannet", "--size", "1296x968", "--out", s(&m)]);
    assert_eq!(printed["fx"].as_f64(), Some(1165.72));
    let map = read_map(&m).unwrap().into_incident().unwrap();
    assert_eq!((map.geometry().width(), map.geometry().height()), (1296, 968));
    let v = map.get(649, 485);
    assert!(v[0].abs() < 1e-3 && v[1].abs() < 1e-3);

    let again = d.path("again.imap");
    ok_json(&["synth", "--fixture", "scannet", "--size", "1296x968", "--out", s(&again)]);
    assert_eq!(std::fs::read(&m).unwrap(), std::fs::read(&again).unwrap());
}

#[test]
fn synth_rejects_unknown_fixture_and_bad_size() {
    let d = Dir::new();
    let out = run(&["synth", "--fixture", "nosuch", "--size", "64x48", "--out", s(&d.path("x.imap"))]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("nosuch") && err.contains("scannet"), "{err}");
    assert!(!run(&["synth", "--fixture", "nyu", "--size", "64by48", "--out", s(&d.path("x.imap"))]).status.success());
    assert!(!run(&["synth", "--size", "64x48", "--out", s(&d.path("x.imap"))]).status.success());
}

#[test]
fn synth_from_intrinsics_json() {
    let d = Dir::new();
    let k = d.path("k.json");
    write_json(&k, &serde_json::json!({"fx": 100.0, "fy": 90.0, "bx": 20.0, "by": 15.0, "width": 40, "height": 30}));
    let m = d.path("m.imap");
    ok_json(&["synth", "--intrinsics-json", s(&k), "--out", s(&m)]);
    let map = read_map(&m).unwrap().into_incident().unwrap();
    assert_eq!(map.get(20, 15), [0.0, 0.0]);
    assert_eq!(map.geometry(), ImageGeometry::new(40, 30).unwrap());
}

#[test]
fn perturb_identity_determinism_and_errors() {
    let d = Dir::new();
    let m = d.path("m.imap");
    ok_json(&["synth", "--fixture", "nyu", "--size", "64x48", "--out", s(&m)]);
    let same = d.path("same.imap");
    ok_json(&["perturb", "--in", s(&m), "--out", s(&same), "--angle-noise", "0", "--outlier-frac", "0", "--seed", "3"]);
    assert_eq!(std::fs::read(&m).unwrap(), std::fs::read(&same).unwrap());

    let (a, b) = (d.path("a.imap"), d.path("b.imap"));
    for p in [&a, &b] {
        ok_json(&["perturb", "--in", s(&m), "--out", s(p), "--angle-noise", "0.01", "--outlier-frac", "0.2", "--seed", "3"]);
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert!(!run(&["perturb", "--in", s(&m), "--out", s(&a), "--outlier-frac", "1.5"]).status.success());
}

#[test]
fn calibrate_clean_and_centered_maps() {
    let d = Dir::new();
    let m = d.path("m.imap");
    let gt = d.path("gt.json");
    let printed = ok_json(&["synth", "--fixture", "scannet", "--out", s(&m)]);
    write_json(&gt, &printed);
    let est = ok_json(&["calibrate", "--in", s(&m), "--gt", s(&gt)]);
    assert!(est["e_f"].as_f64().unwrap() < 1e-6 && est["e_b"].as_f64().unwrap() < 1e-6, "{est}");
    assert!(est["inlier_ratio"].as_f64().unwrap() > 0.99);

    let k = d.path("c.json");
    write_json(&k, &serde_json::json!({"fx": 300.0, "fy": 300.0, "bx": 80.0, "by": 60.0, "width": 160, "height": 120}));
    let c = d.path("c.imap");
    ok_json(&["synth", "--intrinsics-json", s(&k), "--out", s(&c)]);
    let est = ok_json(&["calibrate", "--in", s(&c), "--asm"]);
    assert_eq!((est["bx"].as_f64(), est["by"].as_f64()), (Some(80.0), Some(60.0)));
    assert_eq!(est["fx"], est["fy"]);
}

#[test]
fn calibrate_reports_no_consensus() {
    let d = Dir::new();
    let m = d.path("flat.imap");
    let g = ImageGeometry::new(32, 32).unwrap();
    let map = incidence_core::IncidentMap::from_data(g, vec![[0.1, 0.2]; g.pixel_count()]).unwrap();
    write_map(&m, &RasterMap::Incident(map)).unwrap();
    let out = run(&["calibrate", "--in", s(&m)]);
    assert!(!out.status.success());
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
}

#[test]
fn calibrate_perturbed_maps_over_seeds() {
    let d = Dir::new();
    let m = d.path("m.imap");
    let gt = d.path("gt.json");
    write_json(&gt, &ok_json(&["synth", "--fixture", "nyu", "--size", "256x192", "--out", s(&m)]));
    let mut e_f = Vec::new();
    for seed in 0..20 {
        let seed = seed.to_string();
        let p = d.path("p.imap");
        ok_json(&["perturb", "--in", s(&m), "--out", s(&p), "--angle-noise", "0.01", "--outlier-frac", "0.2", "--seed", &seed]);
        e_f.push(ok_json(&["calibrate", "--in", s(&p), "--gt", s(&gt), "--seed", &seed])["e_f"].as_f64().unwrap());
    }
    e_f.sort_by(f64::total_cmp);
    assert!(e_f[9] < 0.05, "median e_f {}", e_f[9]);
}

fn hypersim_json(d: &Dir, w: usize, h: usize) -> (PathBuf, Intrinsics) {
    let k = Intrinsics::new(889.0, 889.0, 512.0, 384.0).unwrap();
    let p = d.path("k.json");
    write_json(&p, &serde_json::json!({"fx": 889.0, "fy": 889.0, "bx": 512.0, "by": 384.0, "width": w, "height": h}));
    (p, k)
}

#[test]
fn reconstruct_constant_depth() {
    let d = Dir::new();
    let g = ImageGeometry::new(48, 32).unwrap();
    let dm = d.path("d.dmap");
    write_map(&dm, &DepthMap::constant(g, 2.0).unwrap().into()).unwrap();
    let (k, intr) = hypersim_json(&d, 48, 32);
    let ply = d.path("c.ply");
    let out = run(&["reconstruct", "--depth", s(&dm), "--intrinsics", s(&k), "--out", s(&ply)]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("shift"));
    let printed: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(printed["shift"].as_f64(), Some(0.0));
    let cloud = read_ply(&ply).unwrap();
    assert_eq!(cloud.len(), g.pixel_count());
    assert!(cloud.points().iter().all(|p| p[2] == 2.0));
    let back = reproject(&cloud, &intr).unwrap();
    for (i, p) in back.pixels.iter().enumerate() {
        let (x, y) = g.coords(i);
        assert!((p.x - x as f64).abs() < 1e-9 && (p.y - y as f64).abs() < 1e-9);
    }
}

#[test]
fn reconstruct_ramp_matches_analytic_cloud() {
    let d = Dir::new();
    let (w, h) = (40, 24);
    let g = ImageGeometry::new(w, h).unwrap();
    let depth = |x: usize, y: usize| 1.0 + 0.25 * x as f32 + 0.5 * y as f32;
    let values = (0..g.pixel_count()).map(|i| { let (x, y) = g.coords(i); depth(x, y) }).collect();
    let dm = d.path("ramp.dmap");
    write_map(&dm, &DepthMap::new(g, values).unwrap().into()).unwrap();
    let (k, intr) = hypersim_json(&d, w, h);
    let ply = d.path("r.ply");
    ok_json(&["reconstruct", "--depth", s(&dm), "--intrinsics", s(&k), "--out", s(&ply)]);
    let analytic = PointCloud::new(
        (0..g.pixel_count())
            .map(|i| {
                let (x, y) = g.coords(i);
                let z = depth(x, y) as f64;
                [z * (x as f64 - intr.bx) / intr.fx, z * (y as f64 - intr.by) / intr.fy, z]
            })
            .collect(),
    )
    .unwrap();
    assert_eq!(chamfer_l1(&read_ply(&ply).unwrap(), &analytic).unwrap(), 0.0);
}

#[test]
fn reconstruct_from_imap_with_reference_alignment() {
    let d = Dir::new();
    let g = ImageGeometry::new(64, 48).unwrap();
    let m = d.path("m.imap");
    ok_json(&["synth", "--fixture", "nyu", "--size", "64x48", "--out", s(&m)]);
    let truth: Vec<f32> = (0..g.pixel_count()).map(|i| 1.0 + (i % 7) as f32 * 0.5).collect();
    let pred: Vec<f32> = truth.iter().map(|t| (t - 1.0) / 2.0 + 0.25).collect();
    let (dp, dr) = (d.path("pred.dmap"), d.path("ref.dmap"));
    write_map(&dp, &DepthMap::new(g, pred).unwrap().into()).unwrap();
    write_map(&dr, &DepthMap::new(g, truth).unwrap().into()).unwrap();
    let ply = d.path("aligned.ply");
    let out = ok_json(&["reconstruct", "--depth", s(&dp), "--from-imap", s(&m), "--reference", s(&dr), "--out", s(&ply)]);
    assert!((out["scale"].as_f64().unwrap() - 2.0).abs() < 1e-6);
    assert!((out["shift"].as_f64().unwrap() - 0.5).abs() < 1e-6);
    assert!(out["calibration"]["inlier_ratio"].as_f64().unwrap() > 0.99);

    let small = d.path("small.dmap");
    write_map(&small, &DepthMap::constant(ImageGeometry::new(8, 8).unwrap(), 1.0).unwrap().into()).unwrap();
    let out = run(&["reconstruct", "--depth", s(&small), "--from-imap", s(&m), "--out", s(&ply)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("mismatch"));
}

#[test]
fn benchmark_report_is_reproducible_and_consistent() {
    let d = Dir::new();
    let (a, b) = (d.path("a.json"), d.path("b.json"));
    for p in [&a, &b] {
        ok_json(&["benchmark", "--fixtures", "nyu,kitti", "--noise-grid", "0:0,0.005:0.1", "--trials", "3", "--seed", "4",
                  "--scale", "0.25", "--iters", "256", "--no-timing", "--out", s(p)]);
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(std::fs::read(a.with_extension("csv")).unwrap(), std::fs::read(b.with_extension("csv")).unwrap());
    let report: Value = serde_json::from_slice(&std::fs::read(&a).unwrap()).unwrap();
    let records = report["records"].as_array().unwrap();
    assert_eq!(records.len(), 12);
    for r in records.iter().filter(|r| r["sigma"].as_f64() == Some(0.0)) {
        assert!(r["e_f"].as_f64().unwrap() < 1e-6 && r["e_b"].as_f64().unwrap() < 1e-6);
    }
    for g in report["groups"].as_array().unwrap() {
        let mut e_f: Vec<f64> = records
            .iter()
            .filter(|r| r["fixture"] == g["fixture"] && r["sigma"] == g["sigma"] && r["frac"] == g["frac"])
            .map(|r| r["e_f"].as_f64().unwrap())
            .collect();
        e_f.sort_by(f64::total_cmp);
        assert_eq!(g["median_e_f"].as_f64(), Some(e_f[(e_f.len() - 1) / 2]));
    }
    let csv = std::fs::read_to_string(a.with_extension("csv")).unwrap();
    assert_eq!(csv.lines().count(), 13);
    assert!(csv.starts_with("fixture,setting,trial,seed,sigma,frac,e_f,e_b"));
}

#[test]
fn fixtures_and_png_export() {
    let list = ok_json(&["fixtures"]);
    assert_eq!(list.as_array().unwrap().len(), 13);
    let d = Dir::new();
    let m = d.path("m.imap");
    ok_json(&["synth", "--fixture", "nyu", "--size", "32x24", "--out", s(&m)]);
    let png = d.path("m.png");
    let side = ok_json(&["export-png", "--in", s(&m), "--out", s(&png), "--unit"]);
    assert_eq!(side["channels"].as_array().unwrap().len(), 3);
    assert!(png.exists() && d.path("m.png.json").exists());
}
