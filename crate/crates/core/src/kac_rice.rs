//! Kac-Rice moments: expected critical-point counts, second factorial
//! moments of gradient-level crossings and the near-diagonal density bound.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::census::{Cube, Level};
use crate::error::{Error, Result};
use crate::quad::GaussLegendre;
use crate::rng::{batches, stream_rng};
use crate::spectral::{direction_grid, SpectralModel};
use crate::stats;

/// Default draws for first moments.
pub const DEFAULT_MC_FIRST: usize = 200_000;
/// Default draws per lag for the second factorial moment.
pub const DEFAULT_MC_PER_LAG: usize = 20_000;

const BATCH_PAIRS: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Mc,
    Quadrature,
}

/// A Monte Carlo or quadrature estimate. For Monte Carlo the samples are
/// antithetic pair means, so `n_samples` counts pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_samples: usize,
    pub method: Method,
}

impl MomentEstimate {
    fn from_samples(xs: &[f64]) -> Self {
        Self {
            mean: stats::mean(xs),
            stderr: stats::stderr(xs),
            n_samples: xs.len(),
            method: Method::Mc,
        }
    }

    fn scaled(self, c: f64) -> Self {
        Self {
            mean: c * self.mean,
            stderr: c.abs() * self.stderr,
            ..self
        }
    }

    /// `|a - b| / sqrt(se_a^2 + se_b^2)`.
    pub fn z_against(&self, other: &MomentEstimate) -> f64 {
        (self.mean - other.mean).abs() / self.stderr.hypot(other.stderr)
    }
}

/// Output record of the `kacrice` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentRecord {
    pub op: String,
    pub model: serde_json::Value,
    pub params: serde_json::Value,
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl MomentRecord {
    pub fn new(op: &str, model: &SpectralModel, params: serde_json::Value, est: &MomentEstimate) -> Result<Self> {
        Ok(Self {
            op: op.to_string(),
            model: serde_json::from_str(&model.to_json()?)?,
            params,
            mean: est.mean,
            stderr: est.stderr,
            n: est.n_samples,
        })
    }
}

/// Law of a Gaussian target `Y` given conditioners `C = c`, by the
/// regression formulas.
#[derive(Debug, Clone)]
pub struct ConditionalGaussian {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    factor: DMatrix<f64>,
}

impl ConditionalGaussian {
    /// `mean = S_yc S_cc^-1 c`, `cov = S_yy - S_yc S_cc^-1 S_cy`.
    pub fn new(
        s_yy: &DMatrix<f64>,
        s_yc: &DMatrix<f64>,
        s_cc: &DMatrix<f64>,
        c: &DVector<f64>,
    ) -> Result<Self> {
        let chol = s_cc
            .clone()
            .cholesky()
            .ok_or_else(|| Error::NonDegeneracy("conditioner covariance is singular".into()))?;
        let mean = s_yc * chol.solve(c);
        let mut cov = s_yy - s_yc * chol.solve(&s_yc.transpose());
        cov = (&cov + cov.transpose()) * 0.5;
        let eig = cov.clone().symmetric_eigen();
        let scale = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if eig.eigenvalues.iter().any(|&e| e < -1e-8 * scale.max(1.0)) {
            return Err(Error::NonDegeneracy(
                "conditional covariance is not positive semidefinite".into(),
            ));
        }
        let sqrt = eig.eigenvalues.map(|e| e.max(0.0).sqrt());
        let factor = &eig.eigenvectors * DMatrix::from_diagonal(&sqrt);
        Ok(Self { mean, cov, factor })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `mean + sign * F z` with `F F^T = cov`.
    pub fn draw(&self, z: &DVector<f64>, sign: f64) -> DVector<f64> {
        &self.mean + (&self.factor * z) * sign
    }
}

/// Symmetric `d x d` matrix from an upper-triangle row-major vector.
fn hessian_from_upper(upper: &[f64], d: usize) -> DMatrix<f64> {
    let mut h = DMatrix::zeros(d, d);
    let mut k = 0;
    for i in 0..d {
        for j in i..d {
            h[(i, j)] = upper[k];
            h[(j, i)] = upper[k];
            k += 1;
        }
    }
    h
}

/// Determinant and Morse index of a symmetric matrix given by its upper
/// triangle.
pub(crate) fn det_and_index(upper: &[f64], d: usize) -> (f64, usize) {
    match d {
        1 => (upper[0], usize::from(upper[0] < 0.0)),
        2 => {
            let (a, b, c) = (upper[0], upper[1], upper[2]);
            let det = a * c - b * b;
            let index = if det < 0.0 {
                1
            } else if a + c < 0.0 {
                2
            } else {
                0
            };
            (det, index)
        }
        _ => {
            let eigs = hessian_from_upper(upper, d).symmetric_eigenvalues();
            (eigs.iter().product(), eigs.iter().filter(|&&e| e < 0.0).count())
        }
    }
}

/// Antithetic Monte Carlo of `E g(Z)`, `Z` standard normal in `R^dim`;
/// returns one sample per antithetic pair, in a fixed order.
fn antithetic_samples<F>(dim: usize, n_draws: usize, seed: u64, stream_base: u64, g: F) -> Vec<f64>
where
    F: Fn(&DVector<f64>, f64) -> f64 + Sync,
{
    let pairs = (n_draws / 2).max(1);
    batches(pairs, BATCH_PAIRS)
        .into_par_iter()
        .enumerate()
        .map(|(b, (_, len))| {
            let mut rng = stream_rng(seed, stream_base + b as u64);
            (0..len)
                .map(|_| {
                    let z = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
                    0.5 * (g(&z, 1.0) + g(&z, -1.0))
                })
                .collect::<Vec<f64>>()
        })
        .collect::<Vec<_>>()
        .concat()
}

/// Which Morse indexes an expected count covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IndexSel {
    All,
    Only(usize),
}

/// `E[Crt_u^k(cube)]` by the first-order Kac-Rice identity
/// `(2T)^d phi(0; Var X') E[|det X''| 1{index = k} 1{X > u}]`, the
/// expectation taken over `(X'', X)` by `n_mc` antithetic draws.
pub fn expected_count(
    model: &SpectralModel,
    level: Level,
    k: IndexSel,
    cube: &Cube,
    n_mc: usize,
    seed: u64,
) -> Result<MomentEstimate> {
    let d = model.dim();
    if cube.dim() != d {
        return Err(Error::Domain("cube and model dimensions differ".into()));
    }
    if let IndexSel::Only(k) = k {
        if k > d {
            return Err(Error::Domain(format!("index {k} outside [0, {d}]")));
        }
    }
    let rate = expected_rate(model, level, k, n_mc, seed)?;
    Ok(rate.scaled(cube.volume()))
}

/// Expected number of critical points per unit volume.
pub fn expected_rate(
    model: &SpectralModel,
    level: Level,
    k: IndexSel,
    n_mc: usize,
    seed: u64,
) -> Result<MomentEstimate> {
    let d = model.dim();
    let cs = model.covariance_structure()?;
    let det1: f64 = cs.lambda1.diagonal().iter().product();
    let phi0 = (2.0 * std::f64::consts::PI).powf(-(d as f64) / 2.0) / det1;
    let l2 = cs.lambda2.clone();
    let nh = cs.layout.hess_len();
    let samples = antithetic_samples(nh + 1, n_mc, seed, 0, |z, sign| {
        let y = &l2 * z * sign;
        let (det, index) = det_and_index(&y.as_slice()[..nh], d);
        let keep = level.admits(y[nh])
            && match k {
                IndexSel::All => true,
                IndexSel::Only(k) => index == k,
            };
        if keep {
            det.abs()
        } else {
            0.0
        }
    });
    Ok(MomentEstimate::from_samples(&samples).scaled(phi0))
}

/// A variable of the pair `(Z(0), Z(t))`: point (0 or 1) and derivative axes.
type Var = (usize, Vec<usize>);

fn pair_cov(model: &SpectralModel, t: &[f64], vars: &[Var]) -> DMatrix<f64> {
    let neg: Vec<f64> = t.iter().map(|x| -x).collect();
    let d = t.len();
    let at = [
        model.covariance_at(&vec![0.0; d]),
        model.covariance_at(t),
        model.covariance_at(&neg),
    ];
    let n = vars.len();
    DMatrix::from_fn(n, n, |a, b| {
        let (pa, ref xa) = vars[a];
        let (pb, ref xb) = vars[b];
        // Cov(d^a X(s), d^b X(s + h)) = (-1)^|a| d^(a+b) r(h)
        let lag = match (pa, pb) {
            (0, 1) => 1,
            (1, 0) => 2,
            _ => 0,
        };
        let mut axes = xa.clone();
        axes.extend(xb);
        let sign = if xa.len() % 2 == 1 { -1.0 } else { 1.0 };
        sign * at[lag].derivs.get(&axes)
    })
}

fn gradient_vars(d: usize, point: usize) -> Vec<Var> {
    (0..d).map(|i| (point, vec![i])).collect()
}

fn hessian_vars(d: usize, point: usize) -> Vec<Var> {
    let mut v = Vec::new();
    for i in 0..d {
        for j in i..d {
            v.push((point, vec![i, j]));
        }
    }
    v
}

/// Covariance of the transformed conditioners `(X'(0), (X'(t) - X'(0))/rho)`
/// and the cross-covariance of `(X''(0), X''(t))` with them.
fn conditioner_blocks(model: &SpectralModel, t: &[f64], rho: f64) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let d = t.len();
    let mut vars = hessian_vars(d, 0);
    vars.extend(hessian_vars(d, 1));
    let ny = vars.len();
    vars.extend(gradient_vars(d, 0));
    vars.extend(gradient_vars(d, 1));
    let full = pair_cov(model, t, &vars);
    let mut tr = DMatrix::zeros(2 * d, 2 * d);
    for i in 0..d {
        tr[(i, i)] = 1.0;
        tr[(d + i, i)] = -1.0 / rho;
        tr[(d + i, d + i)] = 1.0 / rho;
    }
    let s_yy = full.view((0, 0), (ny, ny)).into_owned();
    let s_yc = full.view((0, ny), (ny, 2 * d)).into_owned() * tr.transpose();
    let s_cc = &tr * full.view((ny, ny), (2 * d, 2 * d)).into_owned() * tr.transpose();
    (s_yy, s_yc, (&s_cc + s_cc.transpose()) * 0.5)
}

fn gaussian_density(x: &DVector<f64>, cov: &DMatrix<f64>) -> Result<f64> {
    let chol = cov
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NonDegeneracy("covariance is singular".into()))?;
    let det: f64 = chol.l().diagonal().iter().map(|v| v * v).product();
    let q = x.dot(&chol.solve(x));
    let n = x.len() as f64;
    Ok((-0.5 * q).exp() / ((2.0 * std::f64::consts::PI).powf(n / 2.0) * det.sqrt()))
}

/// `A(t, v) p_{X'(0), X'(t)}(v, v)` at lag `t = rho mu`.
fn lag_integrand(
    model: &SpectralModel,
    v: &[f64],
    t: &[f64],
    n_mc: usize,
    seed: u64,
    stream: u64,
) -> Result<MomentEstimate> {
    let d = t.len();
    let rho = t.iter().map(|x| x * x).sum::<f64>().sqrt();
    let (s_yy, s_yc, s_cc) = conditioner_blocks(model, t, rho);
    let mut c = DVector::zeros(2 * d);
    for i in 0..d {
        c[i] = v[i];
    }
    let density = gaussian_density(&c, &s_cc)? * rho.powi(-(d as i32));
    let cond = ConditionalGaussian::new(&s_yy, &s_yc, &s_cc, &c)?;
    let nh = d * (d + 1) / 2;
    let samples = antithetic_samples(2 * nh, n_mc, seed, stream << 20, |z, sign| {
        let y = cond.draw(z, sign);
        let (d0, _) = det_and_index(&y.as_slice()[..nh], d);
        let (d1, _) = det_and_index(&y.as_slice()[nh..], d);
        (d0 * d1).abs()
    });
    Ok(MomentEstimate::from_samples(&samples).scaled(density))
}

/// `E[N(v, B)(N(v, B) - 1)]` for the box `B` with the given side lengths,
/// where `N(v, B)` counts points of `B` with `X' = v`.
///
/// The double integral over `B x B` is reduced by stationarity to a single
/// integral over the lag with weight `prod (b_l - |tau_l|)`, taken in polar
/// form `tau = rho mu` with Gauss-Legendre rules (`n_quad` nodes per
/// variable) and `n_mc` conditional draws per node.
pub fn second_factorial_moment(
    model: &SpectralModel,
    v: &[f64],
    sides: &[f64],
    n_mc: usize,
    n_quad: usize,
    seed: u64,
) -> Result<MomentEstimate> {
    let d = model.dim();
    if d > 2 {
        return Err(Error::Capability("second factorial moment supports d <= 2".into()));
    }
    if v.len() != d || sides.len() != d {
        return Err(Error::Domain("level and box must match the model dimension".into()));
    }
    if sides.iter().any(|&b| !(b >= 0.0)) {
        return Err(Error::Domain("box sides must be nonnegative".into()));
    }
    if sides.contains(&0.0) {
        return Ok(MomentEstimate {
            mean: 0.0,
            stderr: 0.0,
            n_samples: 0,
            method: Method::Mc,
        });
    }
    let gl = GaussLegendre::new(n_quad.max(2));
    // nodes (t, weight) over the half space; the integrand is even in t
    let mut nodes: Vec<(Vec<f64>, f64)> = Vec::new();
    if d == 1 {
        for (r, w) in gl.composite(0.0, sides[0], 1) {
            nodes.push((vec![r], 2.0 * w * (sides[0] - r)));
        }
    } else {
        for (th, wt) in gl.composite(0.0, std::f64::consts::PI, 2) {
            let mu = [th.cos(), th.sin()];
            let reach = (0..2)
                .filter(|&i| mu[i].abs() > 1e-15)
                .map(|i| sides[i] / mu[i].abs())
                .fold(f64::INFINITY, f64::min);
            for (r, wr) in gl.composite(0.0, reach, 1) {
                let t = vec![r * mu[0], r * mu[1]];
                let weight = (sides[0] - t[0].abs()) * (sides[1] - t[1].abs());
                nodes.push((t, 2.0 * wt * wr * r * weight));
            }
        }
    }
    let parts: Vec<Result<MomentEstimate>> = nodes
        .iter()
        .enumerate()
        .map(|(i, (t, _))| lag_integrand(model, v, t, n_mc, seed, i as u64))
        .collect();
    let mut mean = 0.0;
    let mut var = 0.0;
    let mut n = 0;
    for ((_, w), part) in nodes.iter().zip(parts) {
        let e = part?;
        mean += w * e.mean;
        var += (w * e.stderr).powi(2);
        n += e.n_samples;
    }
    Ok(MomentEstimate {
        mean,
        stderr: var.sqrt(),
        n_samples: n,
        method: Method::Mc,
    })
}

/// `(rho, p_{X'(0), X'(rho mu)}(0, 0) rho^d)` for each `rho`, from
/// `det Var(X'(0), X'(rho mu))`.
pub fn density_bound_profile(model: &SpectralModel, mu: &[f64], rhos: &[f64]) -> Result<Vec<(f64, f64)>> {
    let d = model.dim();
    if mu.len() != d {
        return Err(Error::Domain("direction must match the model dimension".into()));
    }
    let norm = mu.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mu: Vec<f64> = mu.iter().map(|x| x / norm).collect();
    // (A5) along mu: Var(X''(0) mu) must be nondegenerate
    let cs = model.covariance_structure()?;
    let a5 = DMatrix::from_fn(d, d, |i, j| {
        let mut s = 0.0;
        for k in 0..d {
            for l in 0..d {
                s += mu[k] * mu[l] * cs.r4(i, j, k, l);
            }
        }
        s
    });
    let a5_scale = cs.moments4.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let a5_min = a5.symmetric_eigenvalues().iter().fold(f64::INFINITY, |m, &v| m.min(v));
    if !(a5_min > 1e-12 * a5_scale.max(f64::MIN_POSITIVE)) {
        return Err(Error::A5Violation { mu });
    }
    let mut vars = gradient_vars(d, 0);
    vars.extend(gradient_vars(d, 1));
    rhos.iter()
        .map(|&rho| {
            if !(rho > 0.0) {
                return Err(Error::Domain(format!("rho must be positive, got {rho}")));
            }
            let t: Vec<f64> = mu.iter().map(|m| m * rho).collect();
            let cov = pair_cov(model, &t, &vars);
            let det = cov.determinant();
            if !(det > 0.0) {
                return Err(Error::NonDegeneracy(format!(
                    "Var(X'(0), X'(t)) is singular at rho = {rho}"
                )));
            }
            let p = (2.0 * std::f64::consts::PI).powi(-(d as i32)) / det.sqrt();
            Ok((rho, p * rho.powi(d as i32)))
        })
        .collect()
}

/// Limit of `p rho^d` as `rho -> 0` along `mu`: the density of
/// `(X'(0), X''(0) mu)` at the origin.
pub fn density_bound_limit(model: &SpectralModel, mu: &[f64]) -> Result<f64> {
    let d = model.dim();
    let cs = model.covariance_structure()?;
    let norm = mu.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mu: Vec<f64> = mu.iter().map(|x| x / norm).collect();
    let mut m = DMatrix::zeros(2 * d, 2 * d);
    for i in 0..d {
        for j in 0..d {
            m[(i, j)] = cs.xi[(i, j)];
            let mut s = 0.0;
            for k in 0..d {
                for l in 0..d {
                    s += mu[k] * mu[l] * cs.r4(i, j, k, l);
                }
            }
            m[(d + i, d + j)] = s;
        }
    }
    let det = m.determinant();
    if !(det > 0.0) {
        return Err(Error::A5Violation { mu });
    }
    Ok((2.0 * std::f64::consts::PI).powi(-(d as i32)) / det.sqrt())
}

/// Maximum of `p rho^d` over the direction grid and the given radii; a
/// finite value is the numerical form of the `|t|^-d` density bound.
pub fn density_bound_sup(model: &SpectralModel, rhos: &[f64]) -> Result<f64> {
    let mut sup: f64 = 0.0;
    for mu in direction_grid(model.dim()) {
        for (_, v) in density_bound_profile(model, &mu, rhos)? {
            sup = sup.max(v);
        }
    }
    Ok(sup)
}
