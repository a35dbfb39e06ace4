use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::{index_from_eigs, symmetric_eigenvalues, CensusConfig, CriticalPoint, Cube, MAX_CENSUS_DIM};
use crate::error::{Error, Result};
use crate::field::{FieldRealization, UniformAxis};

/// Enumerates the critical points of `real` inside `cube` with default
/// tolerances and the given seed density.
pub fn find_critical_points(
    real: &FieldRealization,
    cube: &Cube,
    seeds_per_unit: f64,
) -> Result<Vec<CriticalPoint>> {
    let cfg = CensusConfig::for_model(real.model())?.with_seeds_per_unit(seeds_per_unit);
    find_critical_points_with(real, cube, &cfg)
}

/// As [`find_critical_points`] with explicit tolerances. Points are returned
/// sorted lexicographically by location.
pub fn find_critical_points_with(
    real: &FieldRealization,
    cube: &Cube,
    cfg: &CensusConfig,
) -> Result<Vec<CriticalPoint>> {
    let d = real.dim();
    if d > MAX_CENSUS_DIM {
        return Err(Error::Capability(format!(
            "census supports d <= {MAX_CENSUS_DIM}, got {d}"
        )));
    }
    if cube.dim() != d {
        return Err(Error::Domain(format!(
            "cube dimension {} does not match the field dimension {d}",
            cube.dim()
        )));
    }
    if !(cfg.seeds_per_unit > 0.0) {
        return Err(Error::Config("seeds_per_unit must be positive".into()));
    }
    let locations = if d == 1 {
        scan_line(real, cube.half_width(), cfg)
    } else {
        newton_from_grid(real, cube, cfg)
    };
    let locations = dedup(locations, cfg.rho_dedup);

    let mut points = Vec::with_capacity(locations.len());
    let mut near = 0usize;
    for t in locations {
        let jet = real.evaluate(&t);
        let eigs = symmetric_eigenvalues(&jet.hess, d);
        if eigs.iter().any(|e| e.abs() < 2.0 * cfg.eps_eig) {
            near += 1;
        }
        match index_from_eigs(&eigs, cfg.eps_eig) {
            Ok(index) => points.push(CriticalPoint {
                grad_residual: jet.grad.iter().map(|g| g * g).sum::<f64>().sqrt(),
                location: t,
                value: jet.value,
                hess_eigs: eigs,
                index,
            }),
            Err(e) => log::warn!("seed {}: dropping critical point: {e}", real.seed()),
        }
    }
    if near * 100 > points.len().max(1) {
        log::warn!(
            "seed {}: {near} of {} critical points are near-degenerate",
            real.seed(),
            points.len()
        );
    }
    Ok(points)
}

fn dedup(mut pts: Vec<Vec<f64>>, radius: f64) -> Vec<Vec<f64>> {
    pts.sort_by(|a, b| {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut kept: Vec<Vec<f64>> = Vec::with_capacity(pts.len());
    for p in pts {
        let dup = kept.iter().rev().any(|q| {
            let d2: f64 = p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
            d2 < radius * radius
        });
        if !dup {
            kept.push(p);
        }
    }
    kept
}

/// Damped Newton on the gradient with Armijo backtracking on `|grad|^2`.
pub(crate) fn newton(
    real: &FieldRealization,
    start: &[f64],
    cfg: &CensusConfig,
    limit: f64,
) -> Option<Vec<f64>> {
    let d = start.len();
    let mut t = start.to_vec();
    let (_, mut g) = real.gradient(&t);
    let mut phi: f64 = g.iter().map(|x| x * x).sum();
    for _ in 0..cfg.max_newton_iters {
        if phi.sqrt() <= cfg.eps_res {
            return Some(t);
        }
        let jet = real.evaluate(&t);
        let h = DMatrix::from_row_slice(d, d, &jet.hess);
        let rhs = DVector::from_iterator(d, g.iter().map(|x| -x));
        let step = h.lu().solve(&rhs)?;
        if step.iter().any(|s| !s.is_finite()) {
            return None;
        }
        let mut alpha = 1.0;
        loop {
            let trial: Vec<f64> = t.iter().zip(step.iter()).map(|(a, s)| a + alpha * s).collect();
            if trial.iter().any(|x| x.abs() > limit) {
                return None;
            }
            let (_, gt) = real.gradient(&trial);
            let pt: f64 = gt.iter().map(|x| x * x).sum();
            if pt <= (1.0 - 2e-4 * alpha) * phi {
                t = trial;
                g = gt;
                phi = pt;
                break;
            }
            alpha *= 0.5;
            if alpha < 1e-8 {
                return None;
            }
        }
    }
    (phi.sqrt() <= cfg.eps_res).then_some(t)
}

fn newton_from_grid(real: &FieldRealization, cube: &Cube, cfg: &CensusConfig) -> Vec<Vec<f64>> {
    let d = real.dim();
    let t = cube.half_width();
    let n = ((2.0 * t * cfg.seeds_per_unit).ceil() as usize).max(1) + 1;
    let step = 2.0 * t / (n - 1) as f64;
    // one extra seed beyond each face
    let axis = UniformAxis {
        start: -t - step,
        step,
        len: n + 2,
    };
    let grid = real.evaluate_grid(&vec![axis; d]);
    let reach = cfg.capture * step;
    let seeds: Vec<Vec<f64>> = (0..grid.len())
        .filter_map(|k| {
            let jet = grid.jet(k);
            let h = DMatrix::from_row_slice(d, d, &jet.hess);
            let rhs = DVector::from_iterator(d, jet.grad.iter().map(|x| -x));
            let s = h.lu().solve(&rhs)?;
            (s.norm() <= reach).then(|| grid.point(k))
        })
        .collect();
    let limit = t + 2.0 * step;
    let found: Vec<Option<Vec<f64>>> = seeds
        .par_iter()
        .map(|s| newton(real, s, cfg, limit))
        .collect();
    found
        .into_iter()
        .flatten()
        .filter(|p| cube.contains(p))
        .collect()
}

/// One-dimensional enumeration: bracket scan of `X'` on a fine grid, with
/// cubic Hermite models of `X'` deciding when a cell must be split.
fn scan_line(real: &FieldRealization, t: f64, cfg: &CensusConfig) -> Vec<Vec<f64>> {
    let n = ((2.0 * t * cfg.scan_per_unit).ceil() as usize).max(1) + 1;
    let axis = UniformAxis::spanning(-t, t, n);
    let grid = real.evaluate_grid(&[axis]);
    let g = &grid.grad[0];
    let h = &grid.hess[0];
    let margin = 1e-4 * g.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let scanner = Scanner { real, cfg, margin };
    let cells: Vec<Vec<f64>> = (0..n - 1)
        .into_par_iter()
        .map(|i| {
            let mut out = Vec::new();
            scanner.cell(
                Node { x: axis.point(i), g: g[i], h: h[i] },
                Node { x: axis.point(i + 1), g: g[i + 1], h: h[i + 1] },
                0,
                &mut out,
            );
            out
        })
        .collect();
    cells
        .into_iter()
        .flatten()
        .filter(|x| x.abs() < t)
        .map(|x| vec![x])
        .collect()
}

#[derive(Clone, Copy)]
struct Node {
    x: f64,
    g: f64,
    h: f64,
}

struct Scanner<'a> {
    real: &'a FieldRealization,
    cfg: &'a CensusConfig,
    margin: f64,
}

const MAX_SPLIT_DEPTH: usize = 40;

impl Scanner<'_> {
    fn cell(&self, a: Node, b: Node, depth: usize, out: &mut Vec<f64>) {
        let w = b.x - a.x;
        let cubic = |s: f64| {
            let s2 = s * s;
            let s3 = s2 * s;
            (2.0 * s3 - 3.0 * s2 + 1.0) * a.g
                + (s3 - 2.0 * s2 + s) * w * a.h
                + (-2.0 * s3 + 3.0 * s2) * b.g
                + (s3 - s2) * w * b.h
        };
        // stationary points of the cubic model inside the cell
        let qa = 6.0 * a.g + 3.0 * w * a.h - 6.0 * b.g + 3.0 * w * b.h;
        let qb = -6.0 * a.g - 4.0 * w * a.h + 6.0 * b.g - 2.0 * w * b.h;
        let qc = w * a.h;
        let mut ext: Vec<f64> = quadratic_roots(qa, qb, qc)
            .into_iter()
            .filter(|s| *s > 0.0 && *s < 1.0)
            .collect();
        ext.sort_by(f64::total_cmp);

        let sign_change = (a.g < 0.0) != (b.g < 0.0);
        let mut seq = vec![a.g];
        seq.extend(ext.iter().map(|&s| cubic(s)));
        seq.push(b.g);
        let changes = seq.windows(2).filter(|p| (p[0] < 0.0) != (p[1] < 0.0)).count();
        let close = ext.iter().any(|&s| cubic(s).abs() <= self.margin);

        let simple = !close && changes == usize::from(sign_change);
        if simple {
            if sign_change {
                if let Some(x) = self.bracket(a, b) {
                    out.push(x);
                }
            }
            return;
        }
        if depth >= MAX_SPLIT_DEPTH {
            if sign_change {
                if let Some(x) = self.bracket(a, b) {
                    out.push(x);
                }
            }
            return;
        }
        let xm = 0.5 * (a.x + b.x);
        let jet = self.real.evaluate(&[xm]);
        let m = Node { x: xm, g: jet.grad[0], h: jet.hess[0] };
        self.cell(a, m, depth + 1, out);
        self.cell(m, b, depth + 1, out);
    }

    /// Safeguarded Newton-bisection on a sign-change bracket.
    fn bracket(&self, a: Node, b: Node) -> Option<f64> {
        let (mut lo, mut hi) = if a.g < 0.0 { (a.x, b.x) } else { (b.x, a.x) };
        let mut x = if b.g != a.g {
            a.x - a.g * (b.x - a.x) / (b.g - a.g)
        } else {
            0.5 * (a.x + b.x)
        };
        for _ in 0..200 {
            let jet = self.real.evaluate(&[x]);
            let g = jet.grad[0];
            if g.abs() <= self.cfg.eps_res {
                return Some(x);
            }
            if g < 0.0 {
                lo = x;
            } else {
                hi = x;
            }
            let newton = x - g / jet.hess[0];
            let (l, r) = if lo < hi { (lo, hi) } else { (hi, lo) };
            x = if newton.is_finite() && newton > l && newton < r {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if (r - l) <= 4.0 * f64::EPSILON * x.abs().max(1.0) {
                let jet = self.real.evaluate(&[x]);
                return (jet.grad[0].abs() <= self.cfg.eps_res).then_some(x);
            }
        }
        log::warn!("seed {}: bracket refinement did not converge near {x}", self.real.seed());
        None
    }
}

fn quadratic_roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    let scale = a.abs().max(b.abs()).max(c.abs());
    if scale == 0.0 {
        return Vec::new();
    }
    if a.abs() <= 1e-14 * scale {
        return if b != 0.0 { vec![-c / b] } else { Vec::new() };
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return Vec::new();
    }
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    let mut r = vec![q / a];
    if q != 0.0 {
        r.push(c / q);
    }
    r
}
