use std::io::{Read, Write};

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use super::hermite::{coeff_delta, hermite_all, MultiIndex};
use crate::census::Level;
use crate::error::{Error, Result};
use crate::kac_rice::det_and_index;
use crate::rng::{batches, stream_rng};
use crate::spectral::SpectralModel;

/// Default number of Monte Carlo draws per coefficient table.
pub const DEFAULT_COEFF_MC: usize = 1_000_000;
/// Estimates smaller than this many standard errors are flagged as zero.
pub const ZERO_FLAG_SIGMAS: f64 = 3.0;

const BATCH_PAIRS: usize = 4096;

/// One Hermite coefficient `c(h, n) = E[h(Y) H_n(Y)] / n!`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Coefficient {
    pub index: MultiIndex,
    pub estimate: f64,
    pub stderr: f64,
    pub flagged_zero: bool,
}

impl Coefficient {
    /// The estimate, or zero when flagged.
    pub fn value(&self) -> f64 {
        if self.flagged_zero {
            0.0
        } else {
            self.estimate
        }
    }
}

/// Hermite coefficients of a functional on `R^dim` up to order `q_max`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefficientTable {
    pub dim: usize,
    pub q_max: usize,
    /// By order, then colexicographic.
    pub rows: Vec<Coefficient>,
}

impl CoefficientTable {
    /// Builds a table from exact coefficients (zero stderr, nothing flagged).
    pub fn exact(dim: usize, q_max: usize, coef: impl Fn(&MultiIndex) -> f64) -> Self {
        let rows = MultiIndex::up_to_order(dim, q_max)
            .into_iter()
            .map(|index| Coefficient {
                estimate: coef(&index),
                index,
                stderr: 0.0,
                flagged_zero: false,
            })
            .collect();
        Self { dim, q_max, rows }
    }

    pub fn get(&self, n: &MultiIndex) -> Option<&Coefficient> {
        if n.len() != self.dim || n.order() > self.q_max {
            return None;
        }
        // rows are laid out by order, so a linear scan is only over one block
        self.rows.iter().find(|c| &c.index == n)
    }

    /// Coefficient value after zero flagging (0 beyond `q_max`).
    pub fn value(&self, n: &MultiIndex) -> f64 {
        self.get(n).map_or(0.0, Coefficient::value)
    }
}

/// Smallest order `q >= 1` carrying a coefficient that is not flagged and
/// exceeds `tol` standard errors; `q_max + 1` if there is none.
pub fn hermite_rank(table: &CoefficientTable, tol: f64) -> usize {
    table
        .rows
        .iter()
        .filter(|c| c.index.order() >= 1)
        .filter(|c| !c.flagged_zero && c.estimate != 0.0 && c.estimate.abs() > tol * c.stderr)
        .map(|c| c.index.order())
        .min()
        .unwrap_or(table.q_max + 1)
}

/// Monte Carlo Hermite coefficients of `nf` functionals evaluated together:
/// `eval(y, out)` writes `h_j(y)` into `out[j]`. Antithetic pairs `(y, -y)`,
/// one stream per batch.
fn mc_tables<F>(dim: usize, nf: usize, q_max: usize, n_mc: usize, seed: u64, eval: F) -> Vec<CoefficientTable>
where
    F: Fn(&[f64], &mut [f64]) + Sync,
{
    let index = MultiIndex::up_to_order(dim, q_max);
    let ni = index.len();
    let pairs = (n_mc / 2).max(2);
    let partial: Vec<(Vec<f64>, Vec<f64>)> = batches(pairs, BATCH_PAIRS)
        .into_par_iter()
        .enumerate()
        .map(|(b, (_, len))| {
            let mut rng = stream_rng(seed, b as u64);
            let mut s = vec![0.0; nf * ni];
            let mut ss = vec![0.0; nf * ni];
            let mut y = vec![0.0; dim];
            let mut neg = vec![0.0; dim];
            let mut hp = vec![0.0; nf];
            let mut hm = vec![0.0; nf];
            let mut herm = vec![0.0; dim * (q_max + 1)];
            for _ in 0..len {
                for i in 0..dim {
                    y[i] = rng.sample::<f64, _>(StandardNormal);
                    neg[i] = -y[i];
                }
                eval(&y, &mut hp);
                eval(&neg, &mut hm);
                for i in 0..dim {
                    hermite_all(q_max, y[i], &mut herm[i * (q_max + 1)..(i + 1) * (q_max + 1)]);
                }
                for (r, n) in index.iter().enumerate() {
                    let h: f64 = n.0.iter().enumerate().map(|(i, &k)| herm[i * (q_max + 1) + k]).product();
                    let sign = if n.order() % 2 == 0 { 1.0 } else { -1.0 };
                    for j in 0..nf {
                        let x = 0.5 * h * (hp[j] + sign * hm[j]);
                        s[j * ni + r] += x;
                        ss[j * ni + r] += x * x;
                    }
                }
            }
            (s, ss)
        })
        .collect();
    let mut s = vec![0.0; nf * ni];
    let mut ss = vec![0.0; nf * ni];
    for (ps, pss) in &partial {
        for i in 0..nf * ni {
            s[i] += ps[i];
            ss[i] += pss[i];
        }
    }
    let n = pairs as f64;
    (0..nf)
        .map(|j| {
            let rows = index
                .iter()
                .enumerate()
                .map(|(r, idx)| {
                    let fact = idx.factorial();
                    let mean = s[j * ni + r] / n;
                    let var = ((ss[j * ni + r] - n * mean * mean) / (n - 1.0)).max(0.0);
                    let estimate = mean / fact;
                    let stderr = (var / n).sqrt() / fact;
                    Coefficient {
                        index: idx.clone(),
                        estimate,
                        stderr,
                        flagged_zero: r > 0 && estimate.abs() < ZERO_FLAG_SIGMAS * stderr,
                    }
                })
                .collect();
            CoefficientTable { dim, q_max, rows }
        })
        .collect()
}

/// Hermite coefficients of `h` on `R^dim` by `n_mc` antithetic draws. The
/// constant term is never flagged.
pub fn hermite_coefficients<F>(h: F, dim: usize, q_max: usize, n_mc: usize, seed: u64) -> CoefficientTable
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    mc_tables(dim, 1, q_max, n_mc, seed, |y, out| out[0] = h(y))
        .pop()
        .expect("one table")
}

/// Wiener chaos expansion of the weighted critical-point counts
/// `sum_k alpha_k Crt_u^k`.
///
/// The coefficient of `H_n`, `n = (n_grad, n_rest)`, is
/// `a_k(n) = d(n_grad) c(f_k o Lambda_2, n_rest)` with
/// `f_k(x, z) = |det x| 1{index x = k} 1{z >= u}`; it vanishes when `n_grad`
/// has an odd entry.
#[derive(Debug, Clone)]
pub struct ChaosExpansion {
    dim: usize,
    q_max: usize,
    level: Level,
    alpha: Vec<f64>,
    /// `c(f_k o Lambda_2, .)` on `R^(D - d)`, one table per index `k`.
    tables: Vec<CoefficientTable>,
}

impl ChaosExpansion {
    /// Estimates all `d + 1` coefficient tables from one set of draws, with
    /// `alpha = (1, ..., 1)`.
    pub fn estimate(model: &SpectralModel, level: Level, q_max: usize, n_mc: usize, seed: u64) -> Result<Self> {
        let d = model.dim();
        let cs = model.covariance_structure()?;
        let l2 = cs.lambda2.clone();
        let nh = cs.layout.hess_len();
        let rest = nh + 1;
        let tables = mc_tables(rest, d + 1, q_max, n_mc, seed, |y, out| {
            let x = &l2 * DVector::from_column_slice(y);
            out.iter_mut().for_each(|o| *o = 0.0);
            if !level.admits(x[nh]) {
                return;
            }
            let (det, index) = det_and_index(&x.as_slice()[..nh], d);
            out[index] = det.abs();
        });
        Ok(Self {
            dim: d,
            q_max,
            level,
            alpha: vec![1.0; d + 1],
            tables,
        })
    }

    /// Same expansion with index weights `alpha` (length `d + 1`).
    pub fn with_alpha(mut self, alpha: Vec<f64>) -> Result<Self> {
        if alpha.len() != self.dim + 1 {
            return Err(Error::Domain(format!(
                "alpha has {} entries, expected {}",
                alpha.len(),
                self.dim + 1
            )));
        }
        self.alpha = alpha;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Length `D` of the full multi-indices.
    pub fn index_len(&self) -> usize {
        self.dim + self.dim * (self.dim + 1) / 2 + 1
    }

    pub fn q_max(&self) -> usize {
        self.q_max
    }

    pub fn level(&self) -> Level {
        self.level
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    /// Table of `c(f_k o Lambda_2, .)`.
    pub fn table(&self, k: usize) -> &CoefficientTable {
        &self.tables[k]
    }

    /// `a_k(n)` after zero flagging.
    pub fn a_k(&self, k: usize, n: &MultiIndex) -> f64 {
        let (grad, rest) = n.split(self.dim);
        if grad.has_odd_entry() {
            return 0.0;
        }
        coeff_delta(&grad) * self.tables[k].value(&rest)
    }

    /// `a(n) = sum_k alpha_k a_k(n)`.
    pub fn a(&self, n: &MultiIndex) -> f64 {
        (0..=self.dim).map(|k| self.alpha[k] * self.a_k(k, n)).sum()
    }

    /// Non-zero `(n, a(n))` with `|n| = q`, colexicographic.
    pub fn terms(&self, q: usize) -> Vec<(MultiIndex, f64)> {
        MultiIndex::of_order(self.index_len(), q)
            .into_iter()
            .map(|n| {
                let a = self.a(&n);
                (n, a)
            })
            .filter(|(_, a)| *a != 0.0)
            .collect()
    }

    /// Hermite rank of the index-`k` count: the smallest `q >= 1` with a
    /// non-zero `a_k(n)`, `q_max + 1` if none.
    pub fn hermite_rank(&self, k: usize) -> usize {
        (1..=self.q_max)
            .find(|&q| {
                MultiIndex::of_order(self.index_len(), q)
                    .iter()
                    .any(|n| self.a_k(k, n) != 0.0)
            })
            .unwrap_or(self.q_max + 1)
    }

    /// Coefficient rows `(k, n, a_k(n), stderr, flagged_zero)` for every
    /// `n` with even gradient part; the omitted rows are exact zeros.
    pub fn rows(&self) -> Vec<(usize, MultiIndex, f64, f64, bool)> {
        let mut out = Vec::new();
        for k in 0..=self.dim {
            for n in MultiIndex::up_to_order(self.index_len(), self.q_max) {
                let (grad, rest) = n.split(self.dim);
                if grad.has_odd_entry() || rest.order() > self.q_max {
                    continue;
                }
                let dn = coeff_delta(&grad);
                let c = self.tables[k].get(&rest).expect("within q_max");
                out.push((k, n, dn * c.estimate, dn.abs() * c.stderr, c.flagged_zero));
            }
        }
        out
    }

    /// CSV with header `k,n1..nD,estimate,stderr,flagged_zero`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["k".to_string()];
        header.extend((1..=self.index_len()).map(|i| format!("n{i}")));
        header.extend(["estimate", "stderr", "flagged_zero"].map(String::from));
        wr.write_record(&header)?;
        for (k, n, est, se, flag) in self.rows() {
            let mut rec = vec![k.to_string()];
            rec.extend(n.0.iter().map(|v| v.to_string()));
            rec.push(format!("{est:e}"));
            rec.push(format!("{se:e}"));
            rec.push(flag.to_string());
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Reads rows written by [`ChaosExpansion::write_csv`].
pub fn read_coefficient_csv<R: Read>(r: R) -> Result<Vec<(usize, MultiIndex, f64, f64, bool)>> {
    let mut rd = csv::Reader::from_reader(r);
    let width = rd.headers()?.len();
    if width < 5 {
        return Err(Error::Domain("coefficient CSV has too few columns".into()));
    }
    let bad = |e: String| Error::Domain(format!("coefficient CSV: {e}"));
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let k = rec[0].parse().map_err(|e| bad(format!("{e}")))?;
        let n = (1..width - 3)
            .map(|i| rec[i].parse::<usize>().map_err(|e| bad(format!("{e}"))))
            .collect::<Result<Vec<_>>>()?;
        let est = rec[width - 3].parse().map_err(|e| bad(format!("{e}")))?;
        let se = rec[width - 2].parse().map_err(|e| bad(format!("{e}")))?;
        let flag = rec[width - 1].parse().map_err(|e| bad(format!("{e}")))?;
        out.push((k, MultiIndex(n), est, se, flag));
    }
    Ok(out)
}
