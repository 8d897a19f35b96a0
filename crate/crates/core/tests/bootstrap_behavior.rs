//! Seeded statistical behavior of the bootstrap: agreement with the
//! analytic standard error and stability in the number of replicates.

use sdid_core::{
    analytic_se, bootstrap_sdid, generate, subgroup_stats, BootstrapOptions, DgpSpec,
    EstimatorSpec, LevelSpec, NoiseDistribution, NoiseSpec, ResamplingMode, SubgroupContrast,
};

fn dgp(n: usize, seed: u64) -> DgpSpec {
    DgpSpec {
        levels: vec![
            LevelSpec {
                label: "A".into(),
                probability: 0.5,
                baseline_mean: 1.0,
                trend_deviation: 0.0,
                treatment_effect: 2.0,
            },
            LevelSpec {
                label: "B".into(),
                probability: 0.5,
                baseline_mean: 0.0,
                trend_deviation: 0.0,
                treatment_effect: 1.0,
            },
        ],
        common_trend: 3.0,
        post_shock: 0.0,
        noise: NoiseSpec {
            distribution: NoiseDistribution::Gaussian,
            sd_pre: 1.0,
            sd_post: 1.0,
        },
        n,
        seed,
    }
}

#[test]
fn bootstrap_se_tracks_analytic_se() {
    let sim = generate(&dgp(800, 42)).unwrap();
    let contrast = SubgroupContrast::labels("A", "B");

    let stats = subgroup_stats(&sim.panel).unwrap();
    let sa = stats.iter().find(|s| s.level == "A").unwrap();
    let sb = stats.iter().find(|s| s.level == "B").unwrap();
    let analytic = analytic_se(sa, sb).unwrap();

    let result = bootstrap_sdid(
        &sim.panel,
        &EstimatorSpec::SubgroupMeans { contrast },
        &BootstrapOptions {
            b: 2000,
            seed: 7,
            ci_level: 0.95,
            mode: ResamplingMode::Unit,
        },
    )
    .unwrap();

    let rel = (result.se_boot - analytic).abs() / analytic;
    assert!(
        rel < 0.15,
        "se_boot {} vs analytic {} (relative gap {rel:.3})",
        result.se_boot,
        analytic
    );
}

#[test]
fn bootstrap_se_stabilizes_in_replicate_count() {
    let sim = generate(&dgp(300, 17)).unwrap();
    let spec = EstimatorSpec::SubgroupMeans {
        contrast: SubgroupContrast::labels("A", "B"),
    };
    let run = |b: usize| {
        bootstrap_sdid(
            &sim.panel,
            &spec,
            &BootstrapOptions {
                b,
                seed: 1,
                ci_level: 0.95,
                mode: ResamplingMode::Unit,
            },
        )
        .unwrap()
        .se_boot
    };
    let se_5k = run(5_000);
    let se_10k = run(10_000);
    let rel = (se_10k - se_5k).abs() / se_5k;
    assert!(rel < 0.05, "se at 10k {se_10k} vs 5k {se_5k} (relative gap {rel:.4})");
}

#[test]
fn stratified_bootstrap_matches_unit_bootstrap_scale() {
    // With balanced, well-populated levels the two resampling modes
    // should produce similar dispersion.
    let sim = generate(&dgp(600, 5)).unwrap();
    let spec = EstimatorSpec::SubgroupMeans {
        contrast: SubgroupContrast::labels("A", "B"),
    };
    let run = |mode: ResamplingMode| {
        bootstrap_sdid(
            &sim.panel,
            &spec,
            &BootstrapOptions {
                b: 3000,
                seed: 99,
                ci_level: 0.95,
                mode,
            },
        )
        .unwrap()
        .se_boot
    };
    let pooled = run(ResamplingMode::Unit);
    let stratified = run(ResamplingMode::StratifiedByLevel);
    let rel = (pooled - stratified).abs() / pooled;
    assert!(rel < 0.2, "pooled {pooled} vs stratified {stratified}");
}
