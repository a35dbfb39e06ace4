//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any fails. Pass criterion numbers as arguments to run a
//! subset, e.g. `cargo test -p critfield --test acceptance -- 7 12`.

use std::f64::consts::PI;
use std::sync::OnceLock;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use critfield::census::{find_critical_points, Cube, Level};
use critfield::chaos::{
    arcones_check, chaotic_variance_terms, hermite, hermite_rank, limit_variance_convolution, mehler_cov, wick4,
    ChaosExpansion, MultiIndex, SpectralKernelSet, DEFAULT_COEFF_MC, ZERO_FLAG_SIGMAS,
};
use critfield::harness::{
    as_convergence, clt_diagnostics, run_replications, variance_scaling, ExperimentConfig, ExperimentResult,
};
use critfield::kac_rice::{expected_count, second_factorial_moment, IndexSel, DEFAULT_MC_PER_LAG};
use critfield::rng::stream_rng;
use critfield::{stats, synthesize, SpectralModel};

// Tolerances and sizes, pinned.
const EULER_SEEDS: usize = 50;
const KR_Z: f64 = 4.0;
const E2_CONTINUITY_Z: f64 = 5.0;
const E2_SIMULATION_Z: f64 = 3.0;
const DEGENERACY_RATIO: f64 = 0.7;
const NONDEGENERACY_SIGMAS: f64 = 10.0;
const WICK_FIXTURES: usize = 20;
const MC_Z: f64 = 4.0;
const MEHLER_TOL: f64 = 1e-6;
const ROUTE_TOL_Q1: f64 = 0.01;
const ROUTE_TOL_Q2: f64 = 0.05;
const TRUNCATION_BAND: (f64, f64) = (0.5, 1.15);
const ARCONES_LAGS: usize = 16;
const AS_MEDIAN_MAX: f64 = 0.1;
const KERNEL_TOL: f64 = 1e-4;

const SHARED_R: usize = 1000;
const ALPHAS: [[f64; 2]; 4] = [[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, -1.0]];

fn gauss1d() -> SpectralModel {
    SpectralModel::gaussian_isotropic(1, 1.0).unwrap()
}

/// d = 1 experiment shared by several criteria: R = 1000, T in {25, 50, 100},
/// u in {-inf, 0}.
fn shared() -> &'static ExperimentResult {
    static SHARED: OnceLock<ExperimentResult> = OnceLock::new();
    SHARED.get_or_init(|| {
        let t0 = Instant::now();
        let cfg = ExperimentConfig {
            model: gauss1d(),
            t_ladder: vec![25.0, 50.0, 100.0],
            levels: vec![Level::NegInf, Level::At(0.0)],
            alphas: ALPHAS.iter().map(|a| a.to_vec()).collect(),
            replications: SHARED_R,
            atoms: 4000,
            master_seed: 20_251_015,
        };
        let res = run_replications(&cfg).expect("shared experiment");
        eprintln!("  [shared d=1 experiment: {:.1?}, {} replacements]", t0.elapsed(), res.replacements());
        res
    })
}

fn shared_expansion() -> &'static ChaosExpansion {
    static EXP: OnceLock<ChaosExpansion> = OnceLock::new();
    EXP.get_or_init(|| ChaosExpansion::estimate(&gauss1d(), Level::At(0.0), 4, DEFAULT_COEFF_MC, 77).unwrap())
}

/// Gauss-Hermite rule for the standard normal measure (Golub-Welsch).
fn gauss_hermite(n: usize) -> Vec<(f64, f64)> {
    let jac = DMatrix::from_fn(n, n, |i, j| {
        if i + 1 == j || j + 1 == i {
            (i.max(j) as f64).sqrt()
        } else {
            0.0
        }
    });
    let eig = jac.symmetric_eigen();
    (0..n)
        .map(|k| (eig.eigenvalues[k], eig.eigenvectors[(0, k)].powi(2)))
        .collect()
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn c01_euler_identity() -> Outcome {
    let mut detail = Vec::new();
    let mut pass = true;
    for d in [1, 2] {
        let cfg = ExperimentConfig {
            model: SpectralModel::gaussian_isotropic(d, 1.0).unwrap(),
            t_ladder: vec![5.0, 10.0],
            levels: vec![Level::NegInf],
            alphas: vec![],
            replications: EULER_SEEDS,
            atoms: 4000,
            master_seed: 1000 + d as u64,
        };
        match run_replications(&cfg) {
            Ok(res) => {
                let ones = res
                    .records
                    .iter()
                    .flat_map(|r| &r.censuses)
                    .filter(|c| c.chi == 1)
                    .count();
                let total = res.records.len() * 2;
                let redraws = res.replacements();
                pass &= ones == total && redraws as f64 <= 0.01 * EULER_SEEDS as f64;
                detail.push(format!("d={d}: chi=1 on {ones}/{total} (seed, T), {redraws} re-draws"));
            }
            Err(e) => {
                pass = false;
                detail.push(format!("d={d}: {e}"));
            }
        }
    }
    outcome(pass, detail.join("; "))
}

fn c02_kac_rice_mean() -> Outcome {
    let res = shared().prefix(200);
    let ti = res.t_index(50.0).unwrap();
    let totals: Vec<f64> = res.counts(ti, 0).iter().map(|c| c.iter().sum::<u64>() as f64).collect();
    // Rice: 2T (1/pi) sqrt(m4/m2)
    let oracle = 100.0 / PI * 3f64.sqrt();
    let kr = expected_count(&gauss1d(), Level::NegInf, IndexSel::All, &Cube::new(50.0, 1).unwrap(), 200_000, 3).unwrap();
    let mean = stats::mean(&totals);
    let se = stats::stderr(&totals);
    let z = (mean - oracle).abs() / se;
    let z_kr = (kr.mean - oracle).abs() / kr.stderr;
    outcome(
        z <= KR_Z && z_kr <= KR_Z,
        format!("mean {mean:.3} +/- {se:.3} vs {oracle:.3} (z={z:.2}); Kac-Rice MC {:.3} (z={z_kr:.2})", kr.mean),
    )
}

fn c03_second_moment() -> Outcome {
    let model = gauss1d();
    let b = 0.5;
    let e0 = second_factorial_moment(&model, &[0.0], &[b], DEFAULT_MC_PER_LAG, 16, 5).unwrap();
    let e1 = second_factorial_moment(&model, &[0.05], &[b], DEFAULT_MC_PER_LAG, 16, 5).unwrap();
    let z_cont = (e1.mean - e0.mean).abs() / (e0.stderr.powi(2) + e1.stderr.powi(2)).sqrt();
    // simulation: tile [-T, T) of independent realizations by windows of length b;
    // the stderr is taken across realizations
    let t = 100.0;
    let windows = (2.0 * t / b) as usize;
    let per_real: Vec<f64> = (0..200u64)
        .map(|s| {
            let real = synthesize(&model, 4000, 900_000 + s).unwrap();
            let pts = find_critical_points(&real, &Cube::new(t, 1).unwrap(), 4.0).unwrap();
            let mut n = vec![0u64; windows];
            for p in &pts {
                let w = ((p.location[0] + t) / b).floor() as usize;
                n[w.min(windows - 1)] += 1;
            }
            n.iter().map(|&k| (k * k.saturating_sub(1)) as f64).sum::<f64>() / windows as f64
        })
        .collect();
    let sim = stats::mean(&per_real);
    let sim_se = stats::stderr(&per_real);
    let z_sim = (sim - e0.mean).abs() / (sim_se.powi(2) + e0.stderr.powi(2)).sqrt();
    outcome(
        z_cont <= E2_CONTINUITY_Z && z_sim <= E2_SIMULATION_Z,
        format!(
            "E2(0)={:.5}+/-{:.5}, E2(0.05)={:.5}+/-{:.5} (z={z_cont:.2}); simulated {sim:.5}+/-{sim_se:.5} (z={z_sim:.2})",
            e0.mean, e0.stderr, e1.mean, e1.stderr
        ),
    )
}

fn c04_degeneracy() -> Outcome {
    let res = shared().prefix(400);
    let rows = variance_scaling(&res, &[1.0, -1.0], Level::NegInf).unwrap();
    let ratios: Vec<f64> = rows.iter().filter_map(|r| r.ratio).collect();
    let pass = ratios.iter().all(|&r| r <= DEGENERACY_RATIO);
    let v: Vec<String> = rows.iter().map(|r| format!("{:.4}", r.variance)).collect();
    outcome(pass, format!("V(T=25,50,100) = [{}], ratios {:.3?}", v.join(", "), ratios))
}

fn c05_nondegeneracy() -> Outcome {
    let res = shared();
    let mut pass = true;
    let mut parts = Vec::new();
    for a in ALPHAS {
        let rows = variance_scaling(res, &a, Level::At(0.0)).unwrap();
        let last = rows.last().unwrap();
        let ok = last.variance > NONDEGENERACY_SIGMAS * last.stderr;
        pass &= ok;
        parts.push(format!("{a:?}: {:.4}/{:.4}={:.1}", last.variance, last.stderr, last.variance / last.stderr));
    }
    outcome(pass, parts.join(", "))
}

fn c06_clt() -> Outcome {
    let res = shared();
    let mut pass = true;
    let mut parts = Vec::new();
    for a in ALPHAS {
        let d = clt_diagnostics(res, &a, 100.0, Level::At(0.0)).unwrap();
        pass &= d.passed();
        parts.push(format!(
            "{a:?}: skew {:.3} kurt {:.3} edf {:.4}/{:.4}",
            d.skewness, d.excess_kurtosis, d.edf_distance, d.thresholds.edf
        ));
    }
    outcome(pass, parts.join("; "))
}

fn c07_chaos_exactness() -> Outcome {
    let mut pass = true;
    // Hermite orthogonality by Monte Carlo
    let mut rng = stream_rng(71, 0);
    let n = 1_000_000;
    let mut worst_z: f64 = 0.0;
    let draws: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    for m in 0..=6 {
        for k in m..=6 {
            let xs: Vec<f64> = draws.iter().map(|&x| hermite(m, x) * hermite(k, x)).collect();
            let want = if m == k { (1..=m).product::<usize>() as f64 } else { 0.0 };
            worst_z = worst_z.max((stats::mean(&xs) - want).abs() / stats::stderr(&xs));
        }
    }
    pass &= worst_z <= MC_Z;
    // Wick's formula against Monte Carlo
    let mut wick_z: f64 = 0.0;
    for f in 0..WICK_FIXTURES {
        let mut rng = stream_rng(72, f as u64);
        let a = DMatrix::from_fn(4, 4, |_, _| rng.sample::<f64, _>(StandardNormal));
        let c = &a * a.transpose() / 4.0 + DMatrix::identity(4, 4) * 0.1;
        let l = c.clone().cholesky().unwrap().l();
        let xs: Vec<f64> = (0..200_000)
            .map(|_| {
                let z = nalgebra::DVector::from_fn(4, |_, _| rng.sample::<f64, _>(StandardNormal));
                let x = &l * z;
                x[0] * x[1] * x[2] * x[3]
            })
            .collect();
        wick_z = wick_z.max((stats::mean(&xs) - wick4(&c)).abs() / stats::stderr(&xs));
    }
    pass &= wick_z <= MC_Z;
    // Mehler, scalar case, against a Gauss-Hermite quadrature of E[H_q(X) H_q(Y)]
    let gh = gauss_hermite(30);
    let mut mehler_err: f64 = 0.0;
    for q in 0..=4 {
        for &rho in &[-0.8, -0.3, 0.2, 0.6, 0.95] {
            let mut quad = 0.0;
            for &(x, wx) in &gh {
                for &(z, wz) in &gh {
                    let y = rho * x + (1.0 - rho * rho).sqrt() * z;
                    quad += wx * wz * hermite(q, x) * hermite(q, y);
                }
            }
            let g = DMatrix::from_element(1, 1, rho);
            let m = MultiIndex(vec![q]);
            mehler_err = mehler_err.max((mehler_cov(&m, &m, &g).unwrap() - quad).abs());
        }
    }
    pass &= mehler_err <= MEHLER_TOL;
    outcome(
        pass,
        format!("orthogonality max z {worst_z:.2}; wick4 max z {wick_z:.2}; Mehler max error {mehler_err:.1e}"),
    )
}

fn c08_route_equivalence() -> Outcome {
    let model = gauss1d();
    let exp = shared_expansion();
    let mut pass = true;
    let mut parts = Vec::new();
    for (q, tol) in [(1, ROUTE_TOL_Q1), (2, ROUTE_TOL_Q2)] {
        let m = chaotic_variance_terms(&model, exp, q).unwrap();
        let c = limit_variance_convolution(&model, exp, q).unwrap();
        let rel = (m - c).abs() / m.abs();
        pass &= rel <= tol;
        parts.push(format!("q={q}: lag {m:.6} vs spectral {c:.6} (rel {rel:.1e})"));
    }
    outcome(pass, parts.join("; "))
}

fn c09_truncated_variance() -> Outcome {
    let model = gauss1d();
    let exp = shared_expansion();
    let v: Vec<f64> = (1..=4).map(|q| chaotic_variance_terms(&model, exp, q).unwrap()).collect();
    let partial: Vec<f64> = v
        .iter()
        .scan(0.0, |s, x| {
            *s += x;
            Some(*s)
        })
        .collect();
    let monotone = partial.windows(2).all(|w| w[1] >= w[0]);
    let res = shared();
    let rows = variance_scaling(res, &[1.0, 1.0], Level::At(0.0)).unwrap();
    let emp = rows.last().unwrap();
    let ratio = partial[3] / emp.variance;
    outcome(
        monotone && ratio >= TRUNCATION_BAND.0 && ratio <= TRUNCATION_BAND.1,
        format!(
            "partial sums {partial:.4?}; empirical V(T=100) {:.4} +/- {:.4}; ratio {ratio:.3}",
            emp.variance, emp.stderr
        ),
    )
}

fn c10_arcones() -> Outcome {
    let model = gauss1d();
    let cs = model.covariance_structure().unwrap();
    let exp = shared_expansion();
    let l2 = cs.lambda2.clone();
    let mut pass = true;
    let mut worst = f64::NEG_INFINITY;
    let mut psi_max: f64 = 0.0;
    for k in 0..2usize {
        let f = |y: &[f64]| {
            let x = l2[(0, 0)] * y[0];
            let z = l2[(1, 0)] * y[0] + l2[(1, 1)] * y[1];
            let index = usize::from(x < 0.0);
            if index == k && z >= 0.0 {
                x.abs()
            } else {
                0.0
            }
        };
        let rank = hermite_rank(exp.table(k), ZERO_FLAG_SIGMAS);
        // lags 1.0, 1.5, ..., 8.5: the inequality needs Psi <= 1, which fails
        // below one correlation length
        for j in 0..ARCONES_LAGS {
            let t = 1.0 + 0.5 * j as f64;
            let g = cs.gamma(&model.covariance_at(&[t]));
            let block = g.view((1, 1), (2, 2)).into_owned();
            match arcones_check(f, &block, rank, 200_000, (k * 100 + j) as u64) {
                Ok(o) => {
                    pass &= o.holds;
                    worst = worst.max((o.lhs - o.rhs) / o.lhs_stderr);
                    psi_max = psi_max.max(o.psi);
                }
                Err(e) => {
                    pass = false;
                    eprintln!("  lag {t}: {e}");
                }
            }
        }
    }
    outcome(
        pass,
        format!("k in {{0,1}}, {ARCONES_LAGS} lags each; max Psi {psi_max:.3}; max (lhs-rhs)/se {worst:.2}"),
    )
}

fn c11_as_convergence() -> Outcome {
    let cfg = ExperimentConfig {
        model: gauss1d(),
        t_ladder: vec![25.0, 50.0, 100.0, 200.0],
        levels: vec![Level::At(0.0)],
        alphas: vec![],
        replications: 50,
        atoms: 4000,
        master_seed: 31_337,
    };
    let res = run_replications(&cfg).unwrap();
    let conv = as_convergence(&res, 1, Level::At(0.0), 400_000, 9).unwrap();
    let med = &conv.median_abs_dev;
    let monotone = med.windows(2).all(|w| w[1] <= w[0]);
    let last = *med.last().unwrap();
    outcome(
        conv.applicable && monotone && last <= AS_MEDIAN_MAX,
        format!("median |ratio-1| along T = {med:.4?}"),
    )
}

fn c12_kernel_identity() -> Outcome {
    let model = gauss1d();
    let cs = model.covariance_structure().unwrap();
    let ks = SpectralKernelSet::new(&model).unwrap();
    let mut worst: f64 = 0.0;
    for t in [0.25, 0.5, 1.0, 2.0] {
        let direct = cs.gamma(&model.covariance_at(&[t]));
        let (rebuilt, imag) = ks.gamma(&[t]).unwrap();
        worst = worst.max((&rebuilt - &direct).abs().max()).max(imag);
    }
    outcome(worst <= KERNEL_TOL, format!("max deviation {worst:.1e} over lags 0.25, 0.5, 1, 2"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("euler identity", c01_euler_identity),
        ("Kac-Rice mean", c02_kac_rice_mean),
        ("second moment continuity", c03_second_moment),
        ("alternating-sum degeneracy", c04_degeneracy),
        ("finite-level non-degeneracy", c05_nondegeneracy),
        ("CLT diagnostics", c06_clt),
        ("chaos machinery", c07_chaos_exactness),
        ("variance routes", c08_route_equivalence),
        ("truncated chaos variance", c09_truncated_variance),
        ("Arcones inequality", c10_arcones),
        ("a.s. convergence", c11_as_convergence),
        ("kernel identity", c12_kernel_identity),
    ];
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let id = i + 1;
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let t0 = Instant::now();
        let out = run();
        let verdict = if out.pass { "PASS" } else { "FAIL" };
        failed += usize::from(!out.pass);
        println!("[{verdict}] {id:>2} {name} ({:.1?}): {}", t0.elapsed(), out.detail);
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
