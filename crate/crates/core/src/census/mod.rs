//! Critical-point census: enumeration, Morse classification, counts by index
//! and level, boundary faces and Euler characteristics.

mod boundary;
mod grid;
mod newton;

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DMatrix;
use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::field::FieldRealization;
use crate::spectral::SpectralModel;

pub use boundary::{boundary_census, euler_characteristic, BoundaryCensus, FacePoint};
pub use grid::excursion_euler_grid;
pub use newton::{find_critical_points, find_critical_points_with};

/// Highest dimension the census supports.
pub const MAX_CENSUS_DIM: usize = 3;

/// The cube `[-T, T]^d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cube {
    half_width: f64,
    dim: usize,
}

impl Cube {
    pub fn new(half_width: f64, dim: usize) -> Result<Self> {
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::Domain(format!("half width must be positive, got {half_width}")));
        }
        if dim == 0 {
            return Err(Error::Domain("dimension must be at least 1".into()));
        }
        Ok(Self { half_width, dim })
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Lebesgue measure `(2T)^d`.
    pub fn volume(&self) -> f64 {
        (2.0 * self.half_width).powi(self.dim as i32)
    }

    /// Open-cube membership.
    pub fn contains(&self, t: &[f64]) -> bool {
        t.iter().all(|x| x.abs() < self.half_width)
    }
}

/// A threshold level; `NegInf` counts every point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Level {
    NegInf,
    At(f64),
}

impl Level {
    /// `value > u`.
    pub fn admits(&self, value: f64) -> bool {
        match self {
            Level::NegInf => true,
            Level::At(u) => value > *u,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "-inf" | "-Inf" | "-infinity" | "neg_inf" => Ok(Level::NegInf),
            other => other
                .parse::<f64>()
                .ok()
                .filter(|u| u.is_finite())
                .map(Level::At)
                .ok_or_else(|| Error::Config(format!("bad level '{other}'"))),
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Level::NegInf => f.write_str("-inf"),
            Level::At(u) => write!(f, "{u}"),
        }
    }
}

impl Serialize for Level {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Level::NegInf => s.serialize_str("-inf"),
            Level::At(u) => s.serialize_f64(*u),
        }
    }
}

impl<'de> Deserialize<'de> for Level {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct LevelVisitor;
        impl Visitor<'_> for LevelVisitor {
            type Value = Level;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a finite number or \"-inf\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Level, E> {
                Ok(Level::At(v))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Level, E> {
                Ok(Level::At(v as f64))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Level, E> {
                Ok(Level::At(v as f64))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Level, E> {
                Level::parse(v).map_err(E::custom)
            }
        }
        d.deserialize_any(LevelVisitor)
    }
}

/// A nondegenerate critical point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub location: Vec<f64>,
    pub value: f64,
    pub grad_residual: f64,
    /// Ascending.
    pub hess_eigs: Vec<f64>,
    /// Number of negative Hessian eigenvalues.
    pub index: usize,
}

/// Numerical tolerances of the census, in model units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CensusConfig {
    /// Seed-grid density per unit length along each axis.
    pub seeds_per_unit: f64,
    /// A seed is refined only when its first Newton step is shorter than
    /// `capture` seed spacings.
    pub capture: f64,
    pub max_newton_iters: usize,
    pub eps_res: f64,
    pub eps_eig: f64,
    pub rho_dedup: f64,
    /// Grid points per unit length for the one-dimensional bracket scan.
    pub scan_per_unit: f64,
}

impl CensusConfig {
    /// Defaults: 4 seeds per correlation length, `eps_res = 1e-9 sqrt(E|X'|^2)`,
    /// `eps_eig = 1e-7 sqrt(max Var X''_ii)`, `rho_dedup = 1e-4 L`.
    pub fn for_model(model: &SpectralModel) -> Result<Self> {
        let ell = model.correlation_length()?;
        let m2 = model.second_moment_matrix()?;
        let d = model.dim();
        let trace: f64 = (0..d).map(|i| m2[i][i]).sum();
        let mut var_hess: f64 = 0.0;
        for i in 0..d {
            let mut alpha = vec![0; d];
            alpha[i] = 4;
            var_hess = var_hess.max(model.spectral_moment(&alpha)?);
        }
        Ok(Self {
            seeds_per_unit: 4.0 / ell,
            capture: 1.5,
            max_newton_iters: 60,
            eps_res: 1e-9 * trace.sqrt(),
            eps_eig: 1e-7 * var_hess.sqrt(),
            rho_dedup: 1e-4 * ell,
            scan_per_unit: 16.0 / ell,
        })
    }

    pub fn with_seeds_per_unit(mut self, seeds_per_unit: f64) -> Self {
        self.seeds_per_unit = seeds_per_unit;
        self
    }
}

/// Eigenvalues (ascending) of a symmetric row-major `d x d` matrix.
pub fn symmetric_eigenvalues(hess: &[f64], d: usize) -> Vec<f64> {
    let m = DMatrix::from_row_slice(d, d, hess);
    let mut eigs: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
    eigs.sort_by(f64::total_cmp);
    eigs
}

/// Morse index of a symmetric matrix: the number of eigenvalues below
/// `-eps_eig`. Any eigenvalue in `[-eps_eig, eps_eig]` is an error.
pub fn classify(hess: &[f64], d: usize, eps_eig: f64) -> Result<usize> {
    let eigs = symmetric_eigenvalues(hess, d);
    index_from_eigs(&eigs, eps_eig)
}

pub(crate) fn index_from_eigs(eigs: &[f64], eps_eig: f64) -> Result<usize> {
    if let Some(&e) = eigs.iter().find(|e| e.abs() <= eps_eig) {
        return Err(Error::DegenerateHessian {
            eigenvalue: e,
            window: eps_eig,
        });
    }
    Ok(eigs.iter().filter(|&&e| e < -eps_eig).count())
}

/// `Crt_u^k` for every requested level: `counts[level][k]`.
pub fn census(points: &[CriticalPoint], dim: usize, levels: &[Level]) -> Vec<Vec<u64>> {
    levels
        .iter()
        .map(|lvl| {
            let mut c = vec![0u64; dim + 1];
            for p in points.iter().filter(|p| lvl.admits(p.value)) {
                c[p.index] += 1;
            }
            c
        })
        .collect()
}

/// Modified Euler characteristic `sum_k (-1)^(d-k) Crt_u^k`.
pub fn modified_euler(counts: &[u64]) -> i64 {
    let d = counts.len() - 1;
    counts
        .iter()
        .enumerate()
        .map(|(k, &c)| if (d - k) % 2 == 0 { c as i64 } else { -(c as i64) })
        .sum()
}

/// Face-set label `{1,3}` (1-based free coordinates).
pub fn face_label(free: &[usize]) -> String {
    let inner: Vec<String> = free.iter().map(|i| (i + 1).to_string()).collect();
    format!("{{{}}}", inner.join(","))
}

/// Census of one realization over one cube.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CensusResult {
    pub seed: u64,
    #[serde(rename = "T")]
    pub half_width: f64,
    pub levels: Vec<Level>,
    /// `counts_by_level[l][k] = Crt_u^k` at `levels[l]`.
    pub counts_by_level: Vec<Vec<u64>>,
    /// `mu_k(L)` keyed by face label, all levels.
    pub boundary_mu: BTreeMap<String, Vec<u64>>,
    pub chi: i64,
    /// `Phi` at each requested level.
    pub phi: Vec<i64>,
}

impl CensusResult {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// Full census of `real` over `cube`: interior points, boundary faces and
/// the Euler characteristic check. A realization whose `chi != 1` is
/// re-run once at doubled seed density before it is reported as an
/// integrity failure.
pub fn census_realization(
    real: &FieldRealization,
    cube: &Cube,
    levels: &[Level],
    config: &CensusConfig,
) -> Result<(CensusResult, Vec<CriticalPoint>)> {
    let mut cfg = config.clone();
    let mut last = 0;
    for attempt in 0..2 {
        let interior = find_critical_points_with(real, cube, &cfg)?;
        let bnd = boundary::boundary_from_interior(real, cube, &cfg, &interior)?;
        let chi = bnd.euler(Level::NegInf);
        if chi == 1 {
            let counts = census(&interior, cube.dim(), levels);
            let phi = counts.iter().map(|c| modified_euler(c)).collect();
            let result = CensusResult {
                seed: real.seed(),
                half_width: cube.half_width(),
                levels: levels.to_vec(),
                counts_by_level: counts,
                boundary_mu: bnd.mu_map(Level::NegInf),
                chi,
                phi,
            };
            return Ok((result, interior));
        }
        log::warn!(
            "seed {}: chi = {chi} on attempt {attempt}, refining the seed grid",
            real.seed()
        );
        last = chi;
        cfg.seeds_per_unit *= 2.0;
        cfg.scan_per_unit *= 2.0;
    }
    Err(Error::CensusIntegrity { chi: last })
}

/// Census of one realization on nested cubes `[-T, T]^d`, `T` in
/// `half_widths`: the interior search runs once on the largest cube and each
/// smaller cube reuses the points it contains. Every cube must pass the
/// `chi = 1` check; on failure the search is redone once at doubled density.
pub fn nested_census(
    real: &FieldRealization,
    half_widths: &[f64],
    levels: &[Level],
    config: &CensusConfig,
) -> Result<Vec<CensusResult>> {
    let d = real.dim();
    let t_max = half_widths.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let outer = Cube::new(t_max, d)?;
    let mut cfg = config.clone();
    let mut last = 0;
    'attempt: for attempt in 0..2 {
        let interior = find_critical_points_with(real, &outer, &cfg)?;
        let mut out = Vec::with_capacity(half_widths.len());
        for &t in half_widths {
            let cube = Cube::new(t, d)?;
            let inside: Vec<CriticalPoint> = interior
                .iter()
                .filter(|p| cube.contains(&p.location))
                .cloned()
                .collect();
            let bnd = boundary::boundary_from_interior(real, &cube, &cfg, &inside)?;
            let chi = bnd.euler(Level::NegInf);
            if chi != 1 {
                log::warn!(
                    "seed {}: chi = {chi} at T = {t} on attempt {attempt}, refining the seed grid",
                    real.seed()
                );
                last = chi;
                cfg.seeds_per_unit *= 2.0;
                cfg.scan_per_unit *= 2.0;
                continue 'attempt;
            }
            let counts = census(&inside, d, levels);
            let phi = counts.iter().map(|c| modified_euler(c)).collect();
            out.push(CensusResult {
                seed: real.seed(),
                half_width: t,
                levels: levels.to_vec(),
                counts_by_level: counts,
                boundary_mu: bnd.mu_map(Level::NegInf),
                chi,
                phi,
            });
        }
        return Ok(out);
    }
    Err(Error::CensusIntegrity { chi: last })
}
