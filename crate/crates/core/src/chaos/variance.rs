use std::cell::RefCell;
use std::f64::consts::PI;

use nalgebra::{Complex, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use super::coeffs::ChaosExpansion;
use super::hermite::{mehler_cov, MultiIndex};
use crate::error::{Error, Result};
use crate::quad::{self, GaussLegendre};
use crate::rng::{batches, stream_rng};
use crate::spectral::{CovarianceStructure, Layout, SpectralModel};

type C64 = Complex<f64>;

/// Lag integrals are truncated at this many correlation lengths.
pub const LAG_CUTOFF: f64 = 12.0;

/// Largest order handled by the convolution route.
pub const CONVOLUTION_ORDER_LIMIT: usize = 3;

fn weighted_mehler(terms: &[(MultiIndex, f64)], gamma: &DMatrix<f64>) -> Result<f64> {
    let mut s = 0.0;
    for (m, am) in terms {
        for (n, an) in terms {
            s += am * an * mehler_cov(m, n, gamma)?;
        }
    }
    Ok(s)
}

/// `V_q = sum_{m, n in J_q} a(m) a(n) int E[H_m(Y(0)) H_n(Y(t))] dt` with the
/// lag integral over `|t| <= 12 L` (adaptive in `d = 1`, polar product rule
/// in `d = 2`).
pub fn chaotic_variance_terms(model: &SpectralModel, exp: &ChaosExpansion, q: usize) -> Result<f64> {
    let d = model.dim();
    if d != exp.dim() {
        return Err(Error::Domain("expansion and model dimensions differ".into()));
    }
    if d > 2 {
        return Err(Error::Capability(format!("chaotic variance in d = {d} (supported: d <= 2)")));
    }
    let terms = exp.terms(q);
    if q == 0 || terms.is_empty() {
        return Ok(0.0);
    }
    let cs = model.covariance_structure()?;
    let reach = LAG_CUTOFF * model.correlation_length()?;
    let err = RefCell::new(None);
    let integrand = |t: &[f64]| -> f64 {
        let g = cs.gamma(&model.covariance_at(t));
        weighted_mehler(&terms, &g).unwrap_or_else(|e| {
            err.borrow_mut().get_or_insert(e);
            0.0
        })
    };
    let v = if d == 1 {
        // the summand is even in t after summing over (m, n) and (n, m)
        let scale = integrand(&[0.0]).abs().max(1e-300);
        2.0 * quad::adaptive(|t| integrand(&[t]), 0.0, reach, 1e-11 * scale, 1e-9)?
    } else {
        let gl = GaussLegendre::new(8);
        let radial = gl.composite(0.0, reach, 48);
        let n_theta = 64;
        let mut s = 0.0;
        for j in 0..n_theta {
            let th = PI * (j as f64 + 0.5) / n_theta as f64;
            let (c, sn) = (th.cos(), th.sin());
            for &(r, w) in &radial {
                s += w * r * integrand(&[r * c, r * sn]);
            }
        }
        2.0 * s * PI / n_theta as f64
    };
    match err.into_inner() {
        Some(e) => Err(e),
        None => Ok(v),
    }
}

/// `V_1, ..., V_q_max` by [`chaotic_variance_terms`].
pub fn chaotic_variance_profile(model: &SpectralModel, exp: &ChaosExpansion) -> Result<Vec<f64>> {
    (1..=exp.q_max()).map(|q| chaotic_variance_terms(model, exp, q)).collect()
}

/// Spectral kernels `psi(lambda) = Lambda^{-1} nu(lambda)` with
/// `nu = (i lambda_j ; -lambda_j lambda_k (j <= k) ; 1)`, so that
/// `Y(t) = int e^{i t.lambda} psi(lambda) sqrt(f) dW`.
#[derive(Debug, Clone)]
pub struct SpectralKernelSet {
    model: SpectralModel,
    layout: Layout,
    lambda_inv: DMatrix<f64>,
}

impl SpectralKernelSet {
    pub fn new(model: &SpectralModel) -> Result<Self> {
        let cs: CovarianceStructure = model.covariance_structure()?;
        Ok(Self {
            model: model.clone(),
            layout: cs.layout,
            lambda_inv: cs.lambda_inv,
        })
    }

    pub fn len(&self) -> usize {
        self.layout.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layout.is_empty()
    }

    /// `nu(lambda)`.
    pub fn nu(&self, lambda: &[f64]) -> Vec<C64> {
        let d = self.layout.dim;
        let mut v = vec![C64::new(0.0, 0.0); self.layout.len()];
        for j in 0..d {
            v[self.layout.grad(j)] = C64::new(0.0, lambda[j]);
            for k in j..d {
                v[self.layout.hess(j, k)] = C64::new(-lambda[j] * lambda[k], 0.0);
            }
        }
        v[self.layout.value()] = C64::new(1.0, 0.0);
        v
    }

    /// `psi(lambda) = Lambda^{-1} nu(lambda)`.
    pub fn kernels(&self, lambda: &[f64]) -> Vec<C64> {
        let nu = self.nu(lambda);
        let n = nu.len();
        (0..n)
            .map(|i| (0..n).map(|j| nu[j] * self.lambda_inv[(i, j)]).sum())
            .collect()
    }

    /// `Gamma(t)_{ij} = int psi_i conj(psi_j) e^{-i t.lambda} f dlambda` by a
    /// composite Gauss-Legendre product rule over the spectral support
    /// (`d <= 2`). Returns the real part and the largest imaginary part.
    pub fn gamma(&self, t: &[f64]) -> Result<(DMatrix<f64>, f64)> {
        let d = self.layout.dim;
        if d > 2 {
            return Err(Error::Capability(format!("kernel quadrature in d = {d}")));
        }
        let cut = self.model.spectral_cutoff();
        let axis = GaussLegendre::new(8).composite(-cut, cut, if d == 1 { 96 } else { 40 });
        let n = self.len();
        let mut acc = vec![C64::new(0.0, 0.0); n * n];
        let mut visit = |lam: &[f64], w: f64| {
            let f = self.model.density(lam);
            if f == 0.0 {
                return;
            }
            let psi = self.kernels(lam);
            let phase: f64 = -t.iter().zip(lam).map(|(a, b)| a * b).sum::<f64>();
            let e = C64::new(phase.cos(), phase.sin()) * (w * f);
            for i in 0..n {
                for j in 0..n {
                    acc[i * n + j] += psi[i] * psi[j].conj() * e;
                }
            }
        };
        if d == 1 {
            for &(l, w) in &axis {
                visit(&[l], w);
            }
        } else {
            for &(l0, w0) in &axis {
                for &(l1, w1) in &axis {
                    visit(&[l0, l1], w0 * w1);
                }
            }
        }
        let re = DMatrix::from_fn(n, n, |i, j| acc[i * n + j].re);
        let im = acc.iter().map(|c| c.im.abs()).fold(0.0, f64::max);
        Ok((re, im))
    }
}

fn permutations(q: usize) -> Vec<Vec<usize>> {
    if q == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(q - 1) {
        for pos in 0..=p.len() {
            let mut v = p.clone();
            v.insert(pos, q - 1);
            out.push(v);
        }
    }
    out
}

/// `V_q` from the spectral side (`d = 1`, `q <= 3`):
/// `(2 pi)^d / q! int_S |P_q|^2 f(lambda_1) ... f(lambda_q) d sigma` with
/// `P_q = sum_{m in [D]^q} b(m) sum_pi prod_i psi_{m_pi(i)}(lambda_i)`,
/// `b(m) = a(n(m)) / #I_n`, on `S = {lambda_1 + ... + lambda_q = 0}`
/// parametrized by its first `q - 1` coordinates.
pub fn limit_variance_convolution(model: &SpectralModel, exp: &ChaosExpansion, q: usize) -> Result<f64> {
    let d = model.dim();
    if d != 1 {
        return Err(Error::Capability(format!("convolution route in d = {d} (supported: d = 1)")));
    }
    if q > CONVOLUTION_ORDER_LIMIT {
        return Err(Error::Capability(format!(
            "convolution route at order {q} (supported: q <= {CONVOLUTION_ORDER_LIMIT})"
        )));
    }
    if q == 0 {
        return Ok(0.0);
    }
    let kernels = SpectralKernelSet::new(model)?;
    let big_d = kernels.len();
    // words m in [D]^q with their weights b(m)
    let mut words = Vec::new();
    for code in 0..big_d.pow(q as u32) {
        let mut m = Vec::with_capacity(q);
        let mut c = code;
        for _ in 0..q {
            m.push(c % big_d);
            c /= big_d;
        }
        let mut content = vec![0usize; big_d];
        m.iter().for_each(|&i| content[i] += 1);
        let n = MultiIndex(content);
        let a = exp.a(&n);
        if a != 0.0 {
            words.push((m, a / n.word_count()));
        }
    }
    if words.is_empty() {
        return Ok(0.0);
    }
    let perms = permutations(q);
    let p_sq = |lams: &[f64]| -> f64 {
        let psi: Vec<Vec<C64>> = lams.iter().map(|&l| kernels.kernels(&[l])).collect();
        let mut p = C64::new(0.0, 0.0);
        for (m, b) in &words {
            let mut s = C64::new(0.0, 0.0);
            for pi in &perms {
                let mut prod = C64::new(1.0, 0.0);
                for i in 0..q {
                    prod *= psi[i][m[pi[i]]];
                }
                s += prod;
            }
            p += s * *b;
        }
        p.norm_sqr()
    };
    let f = |l: f64| model.density(&[l]);
    let cut = model.spectral_cutoff();
    let pre = 2.0 * PI / super::hermite::factorial(q);
    let v = match q {
        1 => p_sq(&[0.0]) * f(0.0),
        2 => quad::adaptive(|l| p_sq(&[l, -l]) * f(l) * f(-l), -cut, cut, 1e-14, 1e-9)?,
        _ => {
            let err = RefCell::new(None);
            let outer = quad::adaptive(
                |l1| {
                    let f1 = f(l1);
                    if f1 == 0.0 {
                        return 0.0;
                    }
                    let inner = quad::adaptive(
                        |l2| {
                            let l3 = -l1 - l2;
                            let w = f(l2) * f(l3);
                            if w == 0.0 {
                                0.0
                            } else {
                                p_sq(&[l1, l2, l3]) * w
                            }
                        },
                        -cut,
                        cut,
                        1e-14,
                        1e-9,
                    );
                    match inner {
                        Ok(v) => f1 * v,
                        Err(e) => {
                            err.borrow_mut().get_or_insert(e);
                            0.0
                        }
                    }
                },
                -cut,
                cut,
                1e-14,
                1e-8,
            )?;
            if let Some(e) = err.into_inner() {
                return Err(e);
            }
            outer
        }
    };
    Ok(pre * v)
}

/// `Psi = max(max_j sum_k |r_jk|, max_k sum_j |r_jk|)`.
pub fn arcones_psi(cross: &DMatrix<f64>) -> f64 {
    let rows = cross.row_iter().map(|r| r.iter().map(|x| x.abs()).sum::<f64>());
    let cols = cross.column_iter().map(|c| c.iter().map(|x| x.abs()).sum::<f64>());
    rows.chain(cols).fold(0.0, f64::max)
}

/// Outcome of [`arcones_check`].
#[derive(Debug, Clone, Serialize)]
pub struct ArconesOutcome {
    pub psi: f64,
    pub rank: usize,
    /// `|Cov(h(W), h(Q))|` (Monte Carlo).
    pub lhs: f64,
    pub lhs_stderr: f64,
    /// `Psi^rank E[h(W)^2]` (Monte Carlo).
    pub rhs: f64,
    /// `lhs <= rhs + 3 lhs_stderr`.
    pub holds: bool,
}

/// Checks `|Cov(h(W), h(Q))| <= Psi^rank E[h(W)^2]` for standard Gaussian
/// `W, Q` in `R^N` with `E[W_j Q_k] = cross[(j, k)]`, where `rank` is the
/// Hermite rank of `h`.
pub fn arcones_check<F>(h: F, cross: &DMatrix<f64>, rank: usize, n_mc: usize, seed: u64) -> Result<ArconesOutcome>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let n = cross.nrows();
    if cross.ncols() != n {
        return Err(Error::Domain("cross covariance must be square".into()));
    }
    let psi = arcones_psi(cross);
    if psi > 1.0 {
        return Err(Error::Inapplicable { psi });
    }
    // Q = R^T W + S Z with S S^T = I - R^T R
    let resid = DMatrix::identity(n, n) - cross.transpose() * cross;
    let eig = resid.symmetric_eigen();
    let sqrt_vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    let s = &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals);
    let rt = cross.transpose();
    let draws = n_mc.max(4);
    let parts: Vec<Vec<(f64, f64)>> = batches(draws, 8192)
        .into_par_iter()
        .enumerate()
        .map(|(b, (_, len))| {
            let mut rng = stream_rng(seed, b as u64);
            (0..len)
                .map(|_| {
                    let w = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
                    let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
                    let qv = &rt * &w + &s * z;
                    (h(w.as_slice()), h(qv.as_slice()))
                })
                .collect()
        })
        .collect();
    let pairs: Vec<(f64, f64)> = parts.concat();
    let m = draws as f64;
    let mean = pairs.iter().map(|(a, b)| a + b).sum::<f64>() / (2.0 * m);
    let prods: Vec<f64> = pairs.iter().map(|(a, b)| (a - mean) * (b - mean)).collect();
    let cov = crate::stats::mean(&prods);
    let cov_se = crate::stats::stderr(&prods);
    let second = pairs.iter().map(|(a, _)| a * a).sum::<f64>() / m;
    let rhs = psi.powi(rank as i32) * second;
    Ok(ArconesOutcome {
        psi,
        rank,
        lhs: cov.abs(),
        lhs_stderr: cov_se,
        rhs,
        holds: cov.abs() <= rhs + 3.0 * cov_se,
    })
}
