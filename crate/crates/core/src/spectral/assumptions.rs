use nalgebra::DMatrix;
use serde::Serialize;

use super::model::SpectralModel;
use crate::quad::GaussLegendre;

/// Outcome of one assumption check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub passed: bool,
    /// The number the verdict was decided on.
    pub statistic: f64,
    pub detail: String,
}

impl Verdict {
    fn new(passed: bool, statistic: f64, detail: impl Into<String>) -> Self {
        Self {
            passed,
            statistic,
            detail: detail.into(),
        }
    }
}

/// Per-assumption verdicts for a model.
///
/// (A2) is reported through its sufficient condition (A1) + (A5) + (A6).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionReport {
    pub a1: Verdict,
    pub a2: Verdict,
    pub a3: Verdict,
    pub a4: Verdict,
    pub a5: Verdict,
    pub a6: Verdict,
}

impl AssumptionReport {
    pub fn entries(&self) -> [(&'static str, &Verdict); 6] {
        [
            ("A1", &self.a1),
            ("A2", &self.a2),
            ("A3", &self.a3),
            ("A4", &self.a4),
            ("A5", &self.a5),
            ("A6", &self.a6),
        ]
    }

    pub fn all_passed(&self) -> bool {
        self.entries().iter().all(|(_, v)| v.passed)
    }
}

/// Deterministic grid of `128 d` directions on the unit sphere (both signs
/// for `d = 1`).
pub fn direction_grid(d: usize) -> Vec<Vec<f64>> {
    match d {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..256)
            .map(|k| {
                let a = std::f64::consts::PI * 2.0 * k as f64 / 256.0;
                vec![a.cos(), a.sin()]
            })
            .collect(),
        _ => {
            // Fibonacci lattice on S^2 extended by normalized quasi-random
            // coordinates in higher dimensions
            let n = 128 * d;
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..n)
                .map(|k| {
                    let z = 1.0 - 2.0 * (k as f64 + 0.5) / n as f64;
                    let r = (1.0 - z * z).sqrt();
                    let th = golden * k as f64;
                    let mut v = vec![r * th.cos(), r * th.sin(), z];
                    for extra in 3..d {
                        v.push(((k * (extra + 1)) as f64 * 0.618_033_988_75).fract() * 2.0 - 1.0);
                    }
                    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                    v.iter().map(|x| x / norm).collect()
                })
                .collect()
        }
    }
}

fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

fn sphere_area(d: usize) -> f64 {
    2.0 * std::f64::consts::PI.powf(d as f64 / 2.0) / statrs::function::gamma::gamma(d as f64 / 2.0)
}

/// Subsample of the direction grid used inside radial integrals.
fn sparse_directions(d: usize) -> Vec<Vec<f64>> {
    let all = direction_grid(d);
    let step = (all.len() / 16).max(1);
    all.into_iter().step_by(step).collect()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

impl SpectralModel {
    /// Numerical diagnostics for (A1)-(A6). Failures are verdicts, not errors.
    pub fn check_assumptions(&self) -> AssumptionReport {
        let d = self.dim();
        let scale_degenerate = self
            .gaussian_scales()
            .is_some_and(|s| s.iter().any(|&x| x == 0.0));

        // (A1)
        let a1 = match self.second_moment_matrix() {
            Ok(m2) => {
                let mat = DMatrix::from_fn(d, d, |i, j| m2[i][j]);
                let top = mat.amax();
                let min = min_eigenvalue(&mat);
                Verdict::new(
                    min > 1e-12 * top.max(f64::MIN_POSITIVE),
                    min,
                    "smallest eigenvalue of Var(X')",
                )
            }
            Err(e) => Verdict::new(false, f64::NAN, e.to_string()),
        };

        // (A4)
        let f0 = if scale_degenerate {
            0.0
        } else {
            self.density(&vec![0.0; d])
        };
        let a4 = Verdict::new(
            f0 > 0.0 && f0.is_finite(),
            f0,
            if scale_degenerate {
                "no spectral density (zero axis scale)"
            } else {
                "spectral density at the origin"
            },
        );

        // (A5): Var(X''(0) mu)_{ij} = r4(0)[i, j, mu, mu]
        let r4 = self.covariance_at(&vec![0.0; d]).derivs.order(4).to_vec();
        let r4_at = |i: usize, j: usize, k: usize, l: usize| r4[((i * d + j) * d + k) * d + l];
        let r4_scale = r4.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut a5_min = f64::INFINITY;
        for mu in direction_grid(d) {
            let var = DMatrix::from_fn(d, d, |i, j| {
                let mut s = 0.0;
                for k in 0..d {
                    for l in 0..d {
                        s += mu[k] * mu[l] * r4_at(i, j, k, l);
                    }
                }
                s
            });
            a5_min = a5_min.min(min_eigenvalue(&var));
        }
        let a5 = Verdict::new(
            a5_min > 1e-12 * r4_scale.max(f64::MIN_POSITIVE),
            a5_min,
            "min over directions of the smallest eigenvalue of Var(X''(0) mu)",
        );

        let a3 = self.check_arcones(scale_degenerate);
        let a6 = self.check_r4_regularity(&r4, r4_scale);

        let a2 = Verdict::new(
            a1.passed && a5.passed && a6.passed,
            f64::NAN,
            "sufficient condition (A1) + (A5) + (A6)",
        );
        AssumptionReport {
            a1,
            a2,
            a3,
            a4,
            a5,
            a6,
        }
    }

    /// Integral of Psi over dyadic radial shells `[2^j L, 2^{j+1} L)`,
    /// `j = 0..6`, plus the ball of radius `L`.
    fn check_arcones(&self, scale_degenerate: bool) -> Verdict {
        let d = self.dim();
        let ell = self.correlation_length().unwrap_or(1.0);
        let dirs = sparse_directions(d);
        let gl = GaussLegendre::new(12);
        let shell = |lo: f64, hi: f64| {
            gl.integrate(lo, hi, |rho| {
                let avg = dirs
                    .iter()
                    .map(|mu| {
                        let t: Vec<f64> = mu.iter().map(|m| m * rho).collect();
                        self.covariance_at(&t).psi
                    })
                    .sum::<f64>()
                    / dirs.len() as f64;
                rho.powi(d as i32 - 1) * avg
            }) * sphere_area(d)
        };
        let mut shells = vec![shell(0.0, ell)];
        for j in 0..6 {
            let lo = ell * 2f64.powi(j);
            shells.push(shell(lo, 2.0 * lo));
        }
        let total: f64 = shells.iter().sum();
        let n = shells.len();
        let tail_small = shells[n - 1] <= 1e-6 * total;
        let decaying = shells[n - 1] <= 0.5 * shells[n - 2] && shells[n - 2] <= 0.5 * shells[n - 3];
        let passed = !scale_degenerate && total.is_finite() && (tail_small || decaying);
        Verdict::new(passed, total, "integral of Psi over |t| < 64 correlation lengths")
    }

    /// Dyadic-shell estimate of `int |r4(t) - r4(0)| / |t|^d` near the origin.
    fn check_r4_regularity(&self, r4_zero: &[f64], r4_scale: f64) -> Verdict {
        let d = self.dim();
        let dirs = sparse_directions(d);
        let gl = GaussLegendre::new(6);
        let shells: Vec<f64> = (1..=20)
            .map(|j| {
                let hi = 2f64.powi(-(j - 1));
                let lo = 0.5 * hi;
                gl.integrate(lo, hi, |rho| {
                    let avg = dirs
                        .iter()
                        .map(|mu| {
                            let t: Vec<f64> = mu.iter().map(|m| m * rho).collect();
                            max_abs_diff(self.covariance_at(&t).derivs.order(4), r4_zero)
                        })
                        .sum::<f64>()
                        / dirs.len() as f64;
                    avg / rho
                }) * sphere_area(d)
            })
            .collect();
        let floor = 1e-10 * r4_scale.max(f64::MIN_POSITIVE);
        let geometric = shells
            .windows(2)
            .skip(9)
            .all(|w| w[1] <= floor || w[1] <= 0.75 * w[0]);
        let total: f64 = shells.iter().sum();
        Verdict::new(
            geometric && total.is_finite(),
            total,
            "sum over dyadic shells 2^-j <= |t| < 2^-j+1, j = 1..20",
        )
    }
}
