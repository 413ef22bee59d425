use incidence_core::diffusion::{
    build_schedule, ensemble_generate, generate, oracle_denoiser, Aggregation, LatentField, NoiseSchedule,
    PerturbedOracleDenoiser, SamplerConfig,
};
use incidence_core::geometry::synthesize_incident_map;
use incidence_core::{ImageGeometry, Intrinsics};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn target(size: usize) -> LatentField {
    let g = ImageGeometry::new(size, size).unwrap();
    let k = Intrinsics::centered(size as f64, g).unwrap();
    LatentField::from_incident_map(&synthesize_incident_map(&k, g))
}

#[test]
fn oracle_chains_recover_the_clean_field() {
    let sched = NoiseSchedule::default();
    let z0 = target(32);
    let den = oracle_denoiser(z0.clone(), sched.clone());
    for (steps, tol) in [(1000, 1e-4), (10, 1e-3)] {
        let out = generate(&den, &z0, &sched, &SamplerConfig::new(steps, 2), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert!(out.rms_diff(&z0).unwrap() < tol, "{steps} steps");
    }
}

#[test]
fn ensemble_mean_concentrates_like_inverse_root_k() {
    let sched = build_schedule(1000, 0.00085, 0.012).unwrap();
    let z0 = target(128);
    let den = PerturbedOracleDenoiser::new(z0.clone(), sched.clone(), 1.0);
    let cfg = SamplerConfig::new(10, 2);
    let one = ensemble_generate(&den, &z0, 1, &sched, &cfg, 7, Aggregation::Mean).unwrap();
    let ten = ensemble_generate(&den, &z0, 10, &sched, &cfg, 7, Aggregation::Mean).unwrap();
    let ratio = one.mean.rms_diff(&z0).unwrap() / ten.mean.rms_diff(&z0).unwrap();
    let theory = 10f64.sqrt();
    assert!((ratio / theory - 1.0).abs() < 0.2, "ratio {ratio}");
}
