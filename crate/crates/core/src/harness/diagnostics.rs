use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::ExperimentResult;
use crate::census::{Cube, Level};
use crate::error::{Error, Result};
use crate::kac_rice::{expected_count, IndexSel};
use crate::rng::stream_rng;
use crate::stats;

/// Minimum replications for CLT diagnostics.
pub const CLT_MIN_REPLICATIONS: usize = 200;

const EDF_CALIBRATION_SEED: u64 = 0x5eed_0edf;
const EDF_CALIBRATION_SETS: usize = 1000;
const EDF_QUANTILE: f64 = 0.99;

/// Fixed thresholds for the normality diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CltThresholds {
    pub skewness: f64,
    pub excess_kurtosis: f64,
    pub edf: f64,
}

impl CltThresholds {
    /// Skewness 0.25, excess kurtosis 0.6 and the calibrated EDF threshold
    /// for `n` samples.
    pub fn for_sample_size(n: usize) -> Self {
        Self {
            skewness: 0.25,
            excess_kurtosis: 0.6,
            edf: edf_threshold(n),
        }
    }
}

/// 99% quantile of the EDF distance of `n` standardized i.i.d. standard
/// normal draws, over a fixed set of synthetic samples. Memoized per `n`.
pub fn edf_threshold(n: usize) -> f64 {
    static CACHE: OnceLock<Mutex<HashMap<usize, f64>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(&t) = cache.lock().expect("threshold cache").get(&n) {
        return t;
    }
    let t = calibrate_edf(n);
    cache.lock().expect("threshold cache").insert(n, t);
    t
}

fn calibrate_edf(n: usize) -> f64 {
    let mut stat: Vec<f64> = (0..EDF_CALIBRATION_SETS)
        .map(|s| {
            let mut rng = stream_rng(EDF_CALIBRATION_SEED, s as u64);
            let xs: Vec<f64> = (0..n.max(2)).map(|_| rng.sample(StandardNormal)).collect();
            stats::edf_distance(&stats::standardize(&xs))
        })
        .collect();
    stat.sort_by(f64::total_cmp);
    stat[((EDF_QUANTILE * stat.len() as f64).ceil() as usize).min(stat.len()) - 1]
}

/// Normality diagnostics of standardized `C_u^alpha` samples.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CltDiagnostics {
    pub n: usize,
    pub variance: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    pub edf_distance: f64,
    pub thresholds: CltThresholds,
    /// Zero sample variance where a positive limit variance is expected.
    pub anomaly: bool,
}

impl CltDiagnostics {
    pub fn from_samples(samples: &[f64], thresholds: CltThresholds) -> Self {
        let variance = stats::variance(samples);
        if variance <= 0.0 {
            return Self {
                n: samples.len(),
                variance,
                skewness: f64::NAN,
                excess_kurtosis: f64::NAN,
                edf_distance: f64::NAN,
                thresholds,
                anomaly: true,
            };
        }
        Self {
            n: samples.len(),
            variance,
            skewness: stats::skewness(samples),
            excess_kurtosis: stats::excess_kurtosis(samples),
            edf_distance: stats::edf_distance(&stats::standardize(samples)),
            thresholds,
            anomaly: false,
        }
    }

    pub fn skewness_ok(&self) -> bool {
        self.skewness.abs() < self.thresholds.skewness
    }

    pub fn kurtosis_ok(&self) -> bool {
        self.excess_kurtosis.abs() < self.thresholds.excess_kurtosis
    }

    pub fn edf_ok(&self) -> bool {
        self.edf_distance < self.thresholds.edf
    }

    pub fn passed(&self) -> bool {
        !self.anomaly && self.skewness_ok() && self.kurtosis_ok() && self.edf_ok()
    }
}

/// Skewness, excess kurtosis and EDF distance of `C_u^alpha` at half-width
/// `t`.
pub fn clt_diagnostics(result: &ExperimentResult, alpha: &[f64], t: f64, level: Level) -> Result<CltDiagnostics> {
    if result.replications() < CLT_MIN_REPLICATIONS {
        return Err(Error::Domain(format!(
            "CLT diagnostics need at least {CLT_MIN_REPLICATIONS} replications, got {}",
            result.replications()
        )));
    }
    if alpha.iter().all(|&a| a == 0.0) {
        return Err(Error::Domain("alpha = 0 has no distribution to test".into()));
    }
    let samples = result.combination(result.t_index(t)?, result.level_index(level)?, alpha)?;
    let diag = CltDiagnostics::from_samples(&samples, CltThresholds::for_sample_size(samples.len()));
    if diag.anomaly {
        if let Level::At(_) = level {
            log::error!("zero variance of C^alpha at finite level {level} with alpha = {alpha:?}");
        }
    }
    Ok(diag)
}

/// `Var(C_u^alpha)` at one ladder entry.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceRow {
    pub half_width: f64,
    pub variance: f64,
    /// NaN when there are too few replicates to estimate it.
    pub stderr: f64,
    /// `V(T_i) / V(T_{i-1})`.
    pub ratio: Option<f64>,
}

/// Per-`T` table of `Var(C_u^alpha)` with successive ratios.
pub fn variance_scaling(result: &ExperimentResult, alpha: &[f64], level: Level) -> Result<Vec<VarianceRow>> {
    let ladder = &result.config.t_ladder;
    if ladder.len() < 2 {
        return Err(Error::Domain("variance scaling needs at least two ladder points".into()));
    }
    let li = result.level_index(level)?;
    let mut rows: Vec<VarianceRow> = Vec::with_capacity(ladder.len());
    for (ti, &t) in ladder.iter().enumerate() {
        let s = result.combination(ti, li, alpha)?;
        let variance = stats::variance(&s);
        let ratio = rows.last().map(|p| variance / p.variance);
        rows.push(VarianceRow {
            half_width: t,
            variance,
            stderr: stats::variance_stderr(&s),
            ratio,
        });
    }
    Ok(rows)
}

/// Trajectories `Crt_u^k(T) / E[Crt_u^k(T)]` along the ladder.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AsConvergence {
    pub k: usize,
    pub level: Level,
    pub expected: Vec<f64>,
    /// `false` when some expected count is zero and the ratio is undefined.
    pub applicable: bool,
    /// Per seed, per `T`.
    pub trajectories: Vec<Vec<f64>>,
    /// Median over seeds of `|ratio - 1|`, per `T`.
    pub median_abs_dev: Vec<f64>,
    /// Largest `|ratio - 1|` over seeds at the largest `T`.
    pub max_abs_dev: f64,
}

/// Almost-sure convergence trend of `Crt_u^k / E[Crt_u^k]`, the expectation
/// from Kac-Rice with `n_mc` draws.
pub fn as_convergence(result: &ExperimentResult, k: usize, level: Level, n_mc: usize, seed: u64) -> Result<AsConvergence> {
    let d = result.dim();
    if k > d {
        return Err(Error::Domain(format!("index {k} outside [0, {d}]")));
    }
    let li = result.level_index(level)?;
    let ladder = &result.config.t_ladder;
    let expected = ladder
        .iter()
        .map(|&t| {
            expected_count(&result.config.model, level, IndexSel::Only(k), &Cube::new(t, d)?, n_mc, seed)
                .map(|e| e.mean)
        })
        .collect::<Result<Vec<f64>>>()?;
    if expected.iter().any(|&e| !(e > 0.0)) {
        return Ok(AsConvergence {
            k,
            level,
            expected,
            applicable: false,
            trajectories: Vec::new(),
            median_abs_dev: Vec::new(),
            max_abs_dev: f64::NAN,
        });
    }
    let trajectories: Vec<Vec<f64>> = result
        .records
        .iter()
        .map(|r| {
            r.censuses
                .iter()
                .zip(&expected)
                .map(|(c, e)| c.counts_by_level[li][k] as f64 / e)
                .collect()
        })
        .collect();
    let median_abs_dev = (0..ladder.len())
        .map(|ti| {
            let mut dev: Vec<f64> = trajectories.iter().map(|tr| (tr[ti] - 1.0).abs()).collect();
            dev.sort_by(f64::total_cmp);
            let n = dev.len();
            if n % 2 == 1 {
                dev[n / 2]
            } else {
                0.5 * (dev[n / 2 - 1] + dev[n / 2])
            }
        })
        .collect();
    let last = ladder.len() - 1;
    let max_abs_dev = trajectories
        .iter()
        .map(|tr| (tr[last] - 1.0).abs())
        .fold(0.0, f64::max);
    Ok(AsConvergence {
        k,
        level,
        expected,
        applicable: true,
        trajectories,
        median_abs_dev,
        max_abs_dev,
    })
}
