use nalgebra::DMatrix;

use super::model::SpectralModel;
use crate::error::{Error, Result};

/// Position of each coordinate of `(X', upper(X''), X)` inside the
/// `D = d + d(d+1)/2 + 1` dimensional vector.
///
/// The Hessian block stores the upper triangle in row-major order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub dim: usize,
}

impl Layout {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }

    /// `D`.
    pub fn len(&self) -> usize {
        self.dim + self.hess_len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn hess_len(&self) -> usize {
        self.dim * (self.dim + 1) / 2
    }

    pub fn grad(&self, i: usize) -> usize {
        i
    }

    pub fn hess(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        // rows 0..i contribute d, d-1, ..., d-i+1 entries
        let row_start = i * self.dim - i * i.saturating_sub(1) / 2;
        self.dim + row_start + (j - i)
    }

    pub fn value(&self) -> usize {
        self.len() - 1
    }

    /// Derivative multi-index (as a list of axes) of coordinate `a`.
    pub fn axes(&self, a: usize) -> Vec<usize> {
        let d = self.dim;
        if a < d {
            return vec![a];
        }
        if a == self.value() {
            return Vec::new();
        }
        let mut k = d;
        for i in 0..d {
            for j in i..d {
                if k == a {
                    return vec![i, j];
                }
                k += 1;
            }
        }
        unreachable!("coordinate {a} out of range")
    }
}

/// Partial derivatives of `r` up to order 4, stored as full symmetric tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeTensors {
    dim: usize,
    orders: [Vec<f64>; 5],
}

impl DerivativeTensors {
    fn zeros(dim: usize) -> Self {
        Self {
            dim,
            orders: std::array::from_fn(|j| vec![0.0; dim.pow(j as u32)]),
        }
    }

    fn flat(&self, axes: &[usize]) -> usize {
        axes.iter().fold(0, |acc, &a| acc * self.dim + a)
    }

    /// `d^j r / dt_{axes[0]} ... dt_{axes[j-1]}`.
    pub fn get(&self, axes: &[usize]) -> f64 {
        self.orders[axes.len()][self.flat(axes)]
    }

    /// Whole tensor of order `j` in row-major layout.
    pub fn order(&self, j: usize) -> &[f64] {
        &self.orders[j]
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Max-abs-entry norm over all orders.
    pub fn max_abs(&self) -> f64 {
        self.orders
            .iter()
            .flatten()
            .fold(0.0f64, |acc, v| acc.max(v.abs()))
    }
}

/// Covariance function and its derivatives at one lag.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceAtLag {
    pub lag: Vec<f64>,
    pub derivs: DerivativeTensors,
    /// Arcones' statistic: max over orders 0..=4 of the max-abs entry.
    pub psi: f64,
}

impl CovarianceAtLag {
    /// `Cov(A(0), B(t))` for coordinates `a`, `b` of `(X', X'', X)`.
    pub fn cross(&self, layout: &Layout, a: usize, b: usize) -> f64 {
        let mut axes = layout.axes(a);
        let sign = if axes.len() % 2 == 1 { -1.0 } else { 1.0 };
        axes.extend(layout.axes(b));
        sign * self.derivs.get(&axes)
    }

    /// `D x D` matrix `Cov(X(0), X(t))` of the full vector `(X', X'', X)`.
    pub fn cross_matrix(&self, layout: &Layout) -> DMatrix<f64> {
        let n = layout.len();
        DMatrix::from_fn(n, n, |a, b| self.cross(layout, a, b))
    }
}

/// All axis tuples of length `j` over `d` axes, row-major.
fn axis_tuples(d: usize, j: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..j {
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..d).map(move |a| {
                    let mut q = p.clone();
                    q.push(a);
                    q
                })
            })
            .collect();
    }
    out
}

/// `d^n/dx^n exp(-s^2 x^2 / 2) = (-s)^n He_n(s x) exp(-s^2 x^2 / 2)`.
fn gaussian_axis_derivs(s: f64, x: f64) -> [f64; 5] {
    let y = s * x;
    let g = (-y * y / 2.0).exp();
    let he = [1.0, y, y * y - 1.0, y * y * y - 3.0 * y, y.powi(4) - 6.0 * y * y + 3.0];
    std::array::from_fn(|n| (-s).powi(n as i32) * he[n] * g)
}

impl SpectralModel {
    /// Covariance derivatives at lag `t`.
    pub fn covariance_at(&self, t: &[f64]) -> CovarianceAtLag {
        let d = self.dim();
        assert_eq!(t.len(), d);
        let mut derivs = DerivativeTensors::zeros(d);
        if let Some(scales) = self.gaussian_scales() {
            let per_axis: Vec<[f64; 5]> = scales
                .iter()
                .zip(t)
                .map(|(&s, &x)| gaussian_axis_derivs(s, x))
                .collect();
            for j in 0..=4 {
                for (flat, axes) in axis_tuples(d, j).iter().enumerate() {
                    let mut counts = vec![0usize; d];
                    for &a in axes {
                        counts[a] += 1;
                    }
                    derivs.orders[j][flat] = self.total_mass()
                        * counts
                            .iter()
                            .enumerate()
                            .map(|(ax, &n)| per_axis[ax][n])
                            .product::<f64>();
                }
            }
        } else {
            // d^a r(t) = int Re[(i l)^a e^{i l.t}] f(l) dl
            let rule = self.bump_rule();
            let tuples: Vec<Vec<Vec<usize>>> = (0..=4).map(|j| axis_tuples(d, j)).collect();
            for (lambda, w) in &rule {
                let phase: f64 = lambda.iter().zip(t).map(|(l, x)| l * x).sum();
                let (s, c) = phase.sin_cos();
                let trig = [c, -s, -c, s];
                for (j, tj) in tuples.iter().enumerate() {
                    for (flat, axes) in tj.iter().enumerate() {
                        let mono: f64 = axes.iter().map(|&a| lambda[a]).product();
                        derivs.orders[j][flat] += w * mono * trig[j % 4];
                    }
                }
            }
        }
        let psi = derivs.max_abs();
        CovarianceAtLag {
            lag: t.to_vec(),
            derivs,
            psi,
        }
    }

    /// Covariance structure of `(X'(t), X''(t), X(t))` at a single point.
    pub fn covariance_structure(&self) -> Result<CovarianceStructure> {
        let d = self.dim();
        let layout = Layout::new(d);
        let n = layout.len();
        // Cov(d^a X, d^b X) = (-1)^{|a|} i^{|a|+|b|} m_{a+b}
        let mut xi = DMatrix::zeros(n, n);
        for a in 0..n {
            for b in a..n {
                let mut axes = layout.axes(a);
                let na = axes.len();
                axes.extend(layout.axes(b));
                let total = axes.len();
                if total % 2 == 1 {
                    continue;
                }
                let mut alpha = vec![0usize; d];
                for ax in &axes {
                    alpha[*ax] += 1;
                }
                let sign_a = if na % 2 == 1 { -1.0 } else { 1.0 };
                let sign_i = if (total / 2) % 2 == 1 { -1.0 } else { 1.0 };
                let v = sign_a * sign_i * self.spectral_moment(&alpha)?;
                xi[(a, b)] = v;
                xi[(b, a)] = v;
            }
        }
        let lambda1 = block_cholesky(&xi.view((0, 0), (d, d)).into_owned(), "Var(X')")?;
        let lambda2 = block_cholesky(
            &xi.view((d, d), (n - d, n - d)).into_owned(),
            "Var(X'', X)",
        )?;
        let mut lambda = DMatrix::zeros(n, n);
        lambda.view_mut((0, 0), (d, d)).copy_from(&lambda1);
        lambda.view_mut((d, d), (n - d, n - d)).copy_from(&lambda2);
        let lambda_inv = lambda
            .clone()
            .try_inverse()
            .ok_or(Error::DegenerateModel {
                block: "Lambda",
                min_pivot: 0.0,
            })?;
        let moments4 = self.covariance_at(&vec![0.0; d]).derivs.order(4).to_vec();
        Ok(CovarianceStructure {
            layout,
            xi,
            lambda,
            lambda1,
            lambda2,
            lambda_inv,
            moments4,
        })
    }
}

fn block_cholesky(block: &DMatrix<f64>, name: &'static str) -> Result<DMatrix<f64>> {
    let scale = block.diagonal().iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let degenerate = |min_pivot| Error::DegenerateModel {
        block: name,
        min_pivot,
    };
    let chol = block.clone().cholesky().ok_or(degenerate(f64::NAN))?;
    let l = chol.l();
    let min_pivot = l.diagonal().iter().fold(f64::INFINITY, |a, v| a.min(*v));
    if !(min_pivot > 1e-7 * scale.sqrt()) {
        return Err(degenerate(min_pivot));
    }
    Ok(l)
}

/// Covariance `Xi` of `(X', upper(X''), X)` at a point and its block factor.
#[derive(Debug, Clone)]
pub struct CovarianceStructure {
    pub layout: Layout,
    pub xi: DMatrix<f64>,
    /// Block lower-triangular factor, `Lambda Lambda^T = Xi`.
    pub lambda: DMatrix<f64>,
    pub lambda1: DMatrix<f64>,
    pub lambda2: DMatrix<f64>,
    pub lambda_inv: DMatrix<f64>,
    /// `r^(4)(0)` as a flat `d^4` tensor.
    pub moments4: Vec<f64>,
}

impl CovarianceStructure {
    pub fn dim(&self) -> usize {
        self.layout.dim
    }

    /// `Gamma(t) = E[Y(0) Y(t)^T] = Lambda^{-1} Cov(X(0), X(t)) Lambda^{-T}`.
    pub fn gamma(&self, cov: &CovarianceAtLag) -> DMatrix<f64> {
        &self.lambda_inv * cov.cross_matrix(&self.layout) * self.lambda_inv.transpose()
    }

    /// `r^(4)(0)[i, j, k, l]`.
    pub fn r4(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        let d = self.dim();
        self.moments4[((i * d + j) * d + k) * d + l]
    }
}
