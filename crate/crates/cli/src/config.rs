use std::path::Path;

use anyhow::{Context, Result};
use critfield::census::Level;
use critfield::harness::ExperimentConfig;
use critfield::SpectralModel;
use serde::Deserialize;

/// A config file: the `[model]` table plus any experiment fields. Commands
/// other than `clt` only read the fields they need.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: SpectralModel,
    pub master_seed: Option<u64>,
    pub t_ladder: Option<Vec<f64>>,
    pub levels: Option<Vec<Level>>,
    #[serde(default)]
    pub alphas: Vec<Vec<f64>>,
    pub replications: Option<usize>,
    pub atoms: Option<usize>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("cannot parse config {}", path.display()))
    }

    pub fn seed(&self, flag: Option<u64>) -> u64 {
        flag.or(self.master_seed).unwrap_or(0)
    }

    pub fn atoms(&self) -> usize {
        self.atoms.unwrap_or(critfield::field::DEFAULT_ATOMS)
    }

    pub fn largest_t(&self) -> Option<f64> {
        self.t_ladder.as_ref().and_then(|l| l.last().copied())
    }

    pub fn experiment(&self, seed: Option<u64>, replications: Option<usize>) -> Result<ExperimentConfig> {
        let cfg = ExperimentConfig {
            model: self.model.clone(),
            t_ladder: self.t_ladder.clone().context("config has no t_ladder")?,
            levels: self.levels.clone().unwrap_or_else(|| vec![Level::NegInf]),
            alphas: self.alphas.clone(),
            replications: replications.or(self.replications).context("config has no replications")?,
            atoms: self.atoms(),
            master_seed: self.seed(seed),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn parse_level(s: &str) -> std::result::Result<Level, String> {
    Level::parse(s).map_err(|e| e.to_string())
}
