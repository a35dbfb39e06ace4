//! Replicated experiments: many realizations on nested boxes, aggregated
//! into the normalized count vectors and their diagnostics.

mod diagnostics;
mod output;

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::census::{nested_census, CensusConfig, CensusResult, Level, MAX_CENSUS_DIM};
use crate::error::{Error, Result};
use crate::field::{synthesize, DEFAULT_ATOMS};
use crate::rng::derive_seed;
use crate::spectral::SpectralModel;
use crate::stats;

pub use diagnostics::{
    as_convergence, clt_diagnostics, edf_threshold, variance_scaling, AsConvergence, CltDiagnostics,
    CltThresholds, VarianceRow,
};
pub use output::{diagnostics_json, write_results};

/// Replicated experiment description (TOML).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: SpectralModel,
    /// Increasing half-widths `T`; all boxes are nested in the largest.
    pub t_ladder: Vec<f64>,
    pub levels: Vec<Level>,
    /// Index weights, each of length `d + 1`.
    #[serde(default)]
    pub alphas: Vec<Vec<f64>>,
    pub replications: usize,
    #[serde(default = "default_atoms")]
    pub atoms: usize,
    pub master_seed: u64,
}

fn default_atoms() -> usize {
    DEFAULT_ATOMS
}

impl ExperimentConfig {
    pub fn from_toml(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.model.dim();
        if d > MAX_CENSUS_DIM {
            return Err(Error::Capability(format!(
                "census dimension {d} exceeds {MAX_CENSUS_DIM}"
            )));
        }
        if self.replications < 2 {
            return Err(Error::Config(format!("replications must be >= 2, got {}", self.replications)));
        }
        if self.t_ladder.is_empty() || self.t_ladder.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(Error::Config("t_ladder must be non-empty and positive".into()));
        }
        if self.t_ladder.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("t_ladder must be strictly increasing".into()));
        }
        if self.levels.is_empty() {
            return Err(Error::Config("at least one level is required".into()));
        }
        for a in &self.alphas {
            if a.len() != d + 1 || a.iter().any(|x| !x.is_finite()) {
                return Err(Error::Config(format!("alpha {a:?} must hold {} finite entries", d + 1)));
            }
        }
        if self.atoms == 0 {
            return Err(Error::Config("atoms must be positive".into()));
        }
        Ok(())
    }

    /// Replacement draws allowed: 1% of `R`, rounded up.
    pub fn replacement_budget(&self) -> usize {
        self.replications.div_ceil(100)
    }
}

/// One replicate: the seed that was finally used and its census per `T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub replicate: usize,
    pub seed: u64,
    /// Seeds discarded before `seed` (boundary or Hessian degeneracy,
    /// census integrity).
    pub replaced: Vec<u64>,
    /// One census per ladder entry.
    pub censuses: Vec<CensusResult>,
}

/// Aggregate of the normalized vector `(C^0, ..., C^d)` at one `(T, u)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub half_width: f64,
    pub level: Level,
    pub mean_counts: Vec<f64>,
    /// Empirical covariance of `(Crt^k - mean) / sqrt((2T)^d)`.
    pub covariance: Vec<Vec<f64>>,
}

/// Outcome of [`run_replications`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub records: Vec<ReplicateRecord>,
}

impl ExperimentResult {
    /// Builds a result from externally supplied counts, indexed
    /// `[replicate][T][level][k]` (harness self-tests).
    pub fn from_counts(config: ExperimentConfig, counts: Vec<Vec<Vec<Vec<u64>>>>) -> Result<Self> {
        config.validate()?;
        let records = counts
            .into_iter()
            .enumerate()
            .map(|(i, per_t)| {
                if per_t.len() != config.t_ladder.len() {
                    return Err(Error::Domain("one count block per ladder entry is required".into()));
                }
                let censuses = per_t
                    .into_iter()
                    .zip(&config.t_ladder)
                    .map(|(c, &t)| CensusResult {
                        seed: i as u64,
                        half_width: t,
                        levels: config.levels.clone(),
                        phi: c.iter().map(|v| crate::census::modified_euler(v)).collect(),
                        counts_by_level: c,
                        boundary_mu: Default::default(),
                        chi: 1,
                    })
                    .collect();
                Ok(ReplicateRecord {
                    replicate: i,
                    seed: i as u64,
                    replaced: Vec::new(),
                    censuses,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { config, records })
    }

    pub fn dim(&self) -> usize {
        self.config.model.dim()
    }

    pub fn replications(&self) -> usize {
        self.records.len()
    }

    /// Total replacement draws.
    pub fn replacements(&self) -> usize {
        self.records.iter().map(|r| r.replaced.len()).sum()
    }

    /// A copy restricted to the first `n` replicates.
    pub fn prefix(&self, n: usize) -> Self {
        let mut out = self.clone();
        out.records.truncate(n);
        out.config.replications = out.records.len();
        out
    }

    pub fn t_index(&self, t: f64) -> Result<usize> {
        self.config
            .t_ladder
            .iter()
            .position(|&x| (x - t).abs() <= 1e-12 * t.abs())
            .ok_or_else(|| Error::Domain(format!("T = {t} is not on the ladder")))
    }

    pub fn level_index(&self, u: Level) -> Result<usize> {
        self.config
            .levels
            .iter()
            .position(|&l| l == u)
            .ok_or_else(|| Error::Domain(format!("level {u} was not censused")))
    }

    /// `Crt_u^k` per replicate at ladder entry `ti`, level entry `li`.
    pub fn counts(&self, ti: usize, li: usize) -> Vec<Vec<u64>> {
        self.records
            .iter()
            .map(|r| r.censuses[ti].counts_by_level[li].clone())
            .collect()
    }

    /// Normalization divisor `sqrt((2T)^d)`.
    pub fn divisor(&self, ti: usize) -> f64 {
        (2.0 * self.config.t_ladder[ti]).powi(self.dim() as i32).sqrt()
    }

    /// `(Crt_u^k - mean) / sqrt((2T)^d)` per replicate.
    pub fn normalized(&self, ti: usize, li: usize) -> Vec<Vec<f64>> {
        let counts = self.counts(ti, li);
        let d1 = self.dim() + 1;
        let means: Vec<f64> = (0..d1)
            .map(|k| stats::mean(&counts.iter().map(|c| c[k] as f64).collect::<Vec<_>>()))
            .collect();
        let div = self.divisor(ti);
        counts
            .iter()
            .map(|c| (0..d1).map(|k| (c[k] as f64 - means[k]) / div).collect())
            .collect()
    }

    /// Samples of `C_u^alpha = sum_k alpha_k C_u^k`.
    ///
    /// The weighted count is formed before centring so that equal weighted
    /// counts give bit-identical samples (ties matter to the EDF distance).
    pub fn combination(&self, ti: usize, li: usize, alpha: &[f64]) -> Result<Vec<f64>> {
        if alpha.len() != self.dim() + 1 {
            return Err(Error::Domain(format!("alpha must have {} entries", self.dim() + 1)));
        }
        let raw: Vec<f64> = self
            .counts(ti, li)
            .iter()
            .map(|c| c.iter().zip(alpha).map(|(&x, a)| x as f64 * a).sum())
            .collect();
        let m = stats::mean(&raw);
        let div = self.divisor(ti);
        Ok(raw.iter().map(|x| (x - m) / div).collect())
    }

    pub fn aggregate(&self, ti: usize, li: usize) -> Aggregate {
        let counts = self.counts(ti, li);
        let d1 = self.dim() + 1;
        let mean_counts = (0..d1)
            .map(|k| stats::mean(&counts.iter().map(|c| c[k] as f64).collect::<Vec<_>>()))
            .collect();
        Aggregate {
            half_width: self.config.t_ladder[ti],
            level: self.config.levels[li],
            mean_counts,
            covariance: stats::covariance_matrix(&self.normalized(ti, li)),
        }
    }

    pub fn aggregates(&self) -> Vec<Aggregate> {
        let mut out = Vec::new();
        for ti in 0..self.config.t_ladder.len() {
            for li in 0..self.config.levels.len() {
                out.push(self.aggregate(ti, li));
            }
        }
        out
    }
}

/// Seed of replicate `i`, attempt `a` (attempt 0 is the primary draw).
pub fn replicate_seed(master: u64, i: usize, attempt: usize) -> u64 {
    let base = derive_seed(master, i as u64);
    if attempt == 0 {
        base
    } else {
        derive_seed(base, attempt as u64)
    }
}

fn replacement_worthy(e: &Error) -> bool {
    matches!(
        e,
        Error::BoundaryDegeneracy { .. } | Error::DegenerateHessian { .. } | Error::CensusIntegrity { .. }
    )
}

/// Runs `R` independent realizations, each censused on every box of the
/// ladder. Degenerate draws are replaced by the next seed of the same
/// replicate's stream; more than 1% replacements is an integrity error.
pub fn run_replications(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let model = &config.model;
    let census_cfg = CensusConfig::for_model(model)?;
    let budget = config.replacement_budget();
    let records: Vec<Result<ReplicateRecord>> = (0..config.replications)
        .into_par_iter()
        .map(|i| {
            let mut replaced = Vec::new();
            loop {
                let seed = replicate_seed(config.master_seed, i, replaced.len());
                let real = synthesize(model, config.atoms, seed)?;
                match nested_census(&real, &config.t_ladder, &config.levels, &census_cfg) {
                    Ok(censuses) => {
                        return Ok(ReplicateRecord {
                            replicate: i,
                            seed,
                            replaced,
                            censuses,
                        })
                    }
                    Err(e) if replacement_worthy(&e) && replaced.len() < budget => {
                        log::warn!("replicate {i}: seed {seed} discarded ({e})");
                        replaced.push(seed);
                    }
                    Err(e) if replacement_worthy(&e) => {
                        return Err(Error::ExperimentIntegrity {
                            replaced: replaced.len() + 1,
                            budget,
                        })
                    }
                    Err(e) => return Err(e),
                }
            }
        })
        .collect();
    let records = records.into_iter().collect::<Result<Vec<_>>>()?;
    let replaced: usize = records.iter().map(|r| r.replaced.len()).sum();
    if replaced > budget {
        return Err(Error::ExperimentIntegrity { replaced, budget });
    }
    Ok(ExperimentResult {
        config: config.clone(),
        records,
    })
}

#[cfg(test)]
mod tests;
