use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Poisson, StandardNormal};

use super::*;
use crate::census::{modified_euler, Cube, Level};
use crate::kac_rice::{expected_count, IndexSel};
use crate::rng::stream_rng;

fn small_config(r: usize, ladder: Vec<f64>) -> ExperimentConfig {
    ExperimentConfig {
        model: SpectralModel::gaussian_isotropic(1, 1.0).unwrap(),
        t_ladder: ladder,
        levels: vec![Level::NegInf, Level::At(0.0)],
        alphas: vec![vec![1.0, 0.0], vec![-1.0, 1.0]],
        replications: r,
        atoms: 1000,
        master_seed: 17,
    }
}

#[test]
fn config_toml_round_trip_and_validation() {
    let text = r#"
master_seed = 5
replications = 10
t_ladder = [5.0, 10.0]
levels = ["-inf", 0.5]
alphas = [[1.0, 1.0]]

[model]
dim = 1
family = "gaussian_isotropic"
total_mass = 1.0
"#;
    let cfg = ExperimentConfig::from_toml(text).unwrap();
    assert_eq!(cfg.levels, vec![Level::NegInf, Level::At(0.5)]);
    assert_eq!(cfg.atoms, crate::field::DEFAULT_ATOMS);
    let back = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
    assert_eq!(back, cfg);

    let mut bad = cfg.clone();
    bad.replications = 1;
    assert!(bad.validate().is_err());
    let mut bad = cfg.clone();
    bad.t_ladder = vec![10.0, 5.0];
    assert!(bad.validate().is_err());
    let mut bad = cfg.clone();
    bad.alphas = vec![vec![1.0, f64::NAN]];
    assert!(bad.validate().is_err());
    let mut bad = cfg;
    bad.alphas = vec![vec![1.0]];
    assert!(bad.validate().is_err());
}

#[test]
fn two_replicates_are_complete_and_reproducible() {
    let cfg = small_config(2, vec![3.0, 6.0]);
    let a = run_replications(&cfg).unwrap();
    assert_eq!(a.replications(), 2);
    for ti in 0..2 {
        assert_eq!(a.counts(ti, 0).len(), 2);
    }
    let b = run_replications(&cfg).unwrap();
    assert_eq!(a, b);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let c = pool.install(|| run_replications(&cfg)).unwrap();
    assert_eq!(a, c);
    // R = 2: the table exists, the stderr is undefined
    let rows = variance_scaling(&a, &[1.0, 0.0], Level::At(0.0)).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].stderr.is_nan());
    assert!(rows[1].ratio.is_some());
}

#[test]
fn nested_counts_and_euler_identities() {
    let cfg = small_config(12, vec![4.0, 8.0, 16.0]);
    let res = run_replications(&cfg).unwrap();
    for r in &res.records {
        for w in r.censuses.windows(2) {
            for li in 0..2 {
                for k in 0..2 {
                    assert!(w[0].counts_by_level[li][k] <= w[1].counts_by_level[li][k]);
                }
            }
        }
        for c in &r.censuses {
            assert_eq!(c.chi, 1);
            assert_eq!(c.phi[0], modified_euler(&c.counts_by_level[0]));
            assert_eq!(c.phi[0], -(c.counts_by_level[0][0] as i64) + c.counts_by_level[0][1] as i64);
        }
    }
    for agg in res.aggregates() {
        let m = DMatrix::from_fn(2, 2, |i, j| agg.covariance[i][j]);
        assert!((m[(0, 1)] - m[(1, 0)]).abs() <= 1e-12);
        assert!(m.symmetric_eigenvalues().iter().all(|&e| e >= -1e-12));
    }
}

#[test]
fn mean_count_matches_kac_rice() {
    let mut cfg = small_config(60, vec![20.0]);
    cfg.atoms = 4000;
    let res = run_replications(&cfg).unwrap();
    let totals: Vec<f64> = res.counts(0, 0).iter().map(|c| (c[0] + c[1]) as f64).collect();
    let cube = Cube::new(20.0, 1).unwrap();
    let kr = expected_count(&cfg.model, Level::NegInf, IndexSel::All, &cube, 200_000, 1).unwrap();
    let z = (stats::mean(&totals) - kr.mean) / (stats::stderr(&totals).powi(2) + kr.stderr.powi(2)).sqrt();
    assert!(z.abs() < 4.0, "z = {z}");
}

#[test]
fn injected_counts_reproduce_their_moments() {
    let mut cfg = small_config(800, vec![10.0, 20.0]);
    cfg.levels = vec![Level::At(0.0)];
    let mut rng = stream_rng(99, 0);
    let lam = [12.0, 40.0];
    let counts: Vec<Vec<Vec<Vec<u64>>>> = (0..800)
        .map(|_| {
            lam.iter()
                .map(|&l| {
                    let p = Poisson::new(l).unwrap();
                    vec![vec![rng.sample(p) as u64, rng.sample(p) as u64]]
                })
                .collect()
        })
        .collect();
    let res = ExperimentResult::from_counts(cfg, counts).unwrap();
    for (ti, &l) in lam.iter().enumerate() {
        let agg = res.aggregate(ti, 0);
        let div2 = res.divisor(ti).powi(2);
        for k in 0..2 {
            let xs: Vec<f64> = res.counts(ti, 0).iter().map(|c| c[k] as f64).collect();
            assert!((agg.mean_counts[k] - l).abs() < 4.0 * stats::stderr(&xs));
            let v = agg.covariance[k][k] * div2;
            assert!((v - l).abs() < 4.0 * stats::variance_stderr(&xs), "{v} vs {l}");
        }
        assert!(agg.covariance[0][1].abs() * div2 < 4.0 * l / (800f64).sqrt());
    }
}

#[test]
fn normal_injection_passes_the_clt_diagnostics() {
    // each statistic has a false-alarm rate of about 1% per test
    let mut cfg = small_config(1000, vec![50.0, 100.0]);
    cfg.levels = vec![Level::At(0.0)];
    let alphas = [[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, -1.0]];
    let mut failures = 0;
    let trials = 40;
    for s in 0..trials {
        let mut rng = stream_rng(7, s);
        let counts: Vec<Vec<Vec<Vec<u64>>>> = (0..1000)
            .map(|_| {
                (0..2)
                    .map(|_| {
                        let mut draw = || (200.0 + 12.0 * rng.sample::<f64, _>(StandardNormal)).round() as u64;
                        vec![vec![draw(), draw()]]
                    })
                    .collect()
            })
            .collect();
        let res = ExperimentResult::from_counts(cfg.clone(), counts).unwrap();
        for alpha in &alphas {
            let diag = clt_diagnostics(&res, alpha, 100.0, Level::At(0.0)).unwrap();
            assert!(!diag.anomaly);
            failures += usize::from(!diag.passed());
        }
        if s == 0 {
            assert!(clt_diagnostics(&res, &[0.0, 0.0], 100.0, Level::At(0.0)).is_err());
            assert!(clt_diagnostics(&res.prefix(100), &[1.0, 0.0], 100.0, Level::At(0.0)).is_err());
        }
    }
    assert!(failures <= 8, "{failures} of {} injected samples failed", 4 * trials);
}

#[test]
fn skewed_injection_fails_the_clt_diagnostics() {
    let mut cfg = small_config(1000, vec![50.0, 100.0]);
    cfg.levels = vec![Level::At(0.0)];
    let mut rng = stream_rng(8, 0);
    let p = Poisson::new(1.5).unwrap();
    let counts: Vec<Vec<Vec<Vec<u64>>>> = (0..1000)
        .map(|_| (0..2).map(|_| vec![vec![rng.sample(p) as u64, 0]]).collect())
        .collect();
    let res = ExperimentResult::from_counts(cfg, counts).unwrap();
    let diag = clt_diagnostics(&res, &[1.0, 0.0], 100.0, Level::At(0.0)).unwrap();
    assert!(!diag.passed());
    // Crt^1 is identically zero
    let zero = clt_diagnostics(&res, &[0.0, 1.0], 100.0, Level::At(0.0)).unwrap();
    assert!(zero.anomaly);
}

#[test]
fn edf_threshold_is_calibrated() {
    let th = edf_threshold(1000);
    // Lilliefors 1% critical value is about 1.035 / sqrt(n)
    assert!(th > 0.8 / 1000f64.sqrt() && th < 1.3 / 1000f64.sqrt(), "{th}");
    assert_eq!(th, edf_threshold(1000));
}

#[test]
fn convergence_ratio_undefined_without_points() {
    let mut cfg = small_config(3, vec![3.0, 6.0]);
    cfg.levels = vec![Level::At(1e9), Level::At(0.0)];
    let res = run_replications(&cfg).unwrap();
    let far = as_convergence(&res, 1, Level::At(1e9), 10_000, 1).unwrap();
    assert!(!far.applicable);
    let near = as_convergence(&res, 1, Level::At(0.0), 10_000, 1).unwrap();
    assert!(near.applicable);
    assert_eq!(near.trajectories.len(), 3);
    assert_eq!(near.median_abs_dev.len(), 2);
}

#[test]
fn results_are_written_reproducibly() {
    let cfg = small_config(3, vec![3.0, 6.0]);
    let res = run_replications(&cfg).unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    write_results(&res, a.path()).unwrap();
    write_results(&res, b.path()).unwrap();
    for name in ["config.toml", "counts_T3.csv", "counts_T6.csv", "aggregate.json", "diagnostics.json"] {
        let x = std::fs::read(a.path().join(name)).unwrap();
        let y = std::fs::read(b.path().join(name)).unwrap();
        assert_eq!(x, y, "{name}");
    }
    let cfg_back = ExperimentConfig::load(&a.path().join("config.toml")).unwrap();
    assert_eq!(cfg_back, cfg);
    let diag: serde_json::Value =
        serde_json::from_slice(&std::fs::read(a.path().join("diagnostics.json")).unwrap()).unwrap();
    assert!(diag["entries"][0]["clt"]["error"].is_string());
}
