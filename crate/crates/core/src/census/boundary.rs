use std::collections::BTreeMap;

use super::{face_label, find_critical_points_with, CensusConfig, CriticalPoint, Cube, Level};
use crate::error::{Error, Result};
use crate::field::FieldRealization;

/// A critical point of the field restricted to an open face, kept only when
/// every outward normal derivative is positive.
#[derive(Debug, Clone, PartialEq)]
pub struct FacePoint {
    /// Free coordinates (0-based), ascending.
    pub free: Vec<usize>,
    /// Location in the full cube.
    pub location: Vec<f64>,
    pub value: f64,
    /// Index of the restricted Hessian.
    pub restricted_index: usize,
}

impl FacePoint {
    /// The `k` this point contributes to in `mu_k(L)`: `l - index`.
    pub fn k(&self) -> usize {
        self.free.len() - self.restricted_index
    }
}

/// All face contributions `mu_k(L)` of one realization over one cube,
/// including the interior (`L = {1..d}`).
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryCensus {
    pub dim: usize,
    pub points: Vec<FacePoint>,
}

impl BoundaryCensus {
    /// `mu_k(L)` for `k = 0..=l`, counting points above `level`.
    pub fn mu(&self, free: &[usize], level: Level) -> Vec<u64> {
        let mut mu = vec![0u64; free.len() + 1];
        for p in self.points.iter().filter(|p| p.free == free && level.admits(p.value)) {
            mu[p.k()] += 1;
        }
        mu
    }

    /// `mu_k(L)` for every face set, keyed by [`face_label`].
    pub fn mu_map(&self, level: Level) -> BTreeMap<String, Vec<u64>> {
        face_sets(self.dim)
            .into_iter()
            .map(|free| (face_label(&free), self.mu(&free, level)))
            .collect()
    }

    /// `sum_L sum_k (-1)^k mu_k(L)`; at `-inf` this is the Euler
    /// characteristic of the cube, at a finite level that of the excursion
    /// set above it.
    pub fn euler(&self, level: Level) -> i64 {
        self.points
            .iter()
            .filter(|p| level.admits(p.value))
            .map(|p| if p.k() % 2 == 0 { 1 } else { -1 })
            .sum()
    }
}

/// All subsets of `0..d`, by size then lexicographically.
pub(crate) fn face_sets(d: usize) -> Vec<Vec<usize>> {
    let mut sets: Vec<Vec<usize>> = (0u32..1 << d)
        .map(|mask| (0..d).filter(|i| mask & (1 << i) != 0).collect())
        .collect();
    sets.sort_by(|a: &Vec<usize>, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    sets
}

/// Boundary census with default tolerances (interior included).
pub fn boundary_census(real: &FieldRealization, cube: &Cube) -> Result<BoundaryCensus> {
    let cfg = CensusConfig::for_model(real.model())?;
    let interior = find_critical_points_with(real, cube, &cfg)?;
    boundary_from_interior(real, cube, &cfg, &interior)
}

/// Euler characteristic of the cube assembled from the census; anything
/// other than 1 is an integrity error.
pub fn euler_characteristic(real: &FieldRealization, cube: &Cube) -> Result<i64> {
    let chi = boundary_census(real, cube)?.euler(Level::NegInf);
    if chi != 1 {
        return Err(Error::CensusIntegrity { chi });
    }
    Ok(chi)
}

pub(crate) fn boundary_from_interior(
    real: &FieldRealization,
    cube: &Cube,
    cfg: &CensusConfig,
    interior: &[CriticalPoint],
) -> Result<BoundaryCensus> {
    let d = real.dim();
    let t = cube.half_width();
    let all: Vec<usize> = (0..d).collect();
    let mut points: Vec<FacePoint> = interior
        .iter()
        .map(|p| FacePoint {
            free: all.clone(),
            location: p.location.clone(),
            value: p.value,
            restricted_index: p.index,
        })
        .collect();

    for free in face_sets(d).into_iter().filter(|f| f.len() < d) {
        let fixed: Vec<usize> = (0..d).filter(|i| !free.contains(i)).collect();
        for signs in 0u32..1 << fixed.len() {
            let mut anchor = vec![0.0; d];
            let mut outward = vec![0.0; d];
            for (b, &j) in fixed.iter().enumerate() {
                let s = if signs & (1 << b) != 0 { 1.0 } else { -1.0 };
                anchor[j] = s * t;
                outward[j] = s;
            }
            let candidates: Vec<(Vec<f64>, usize)> = if free.is_empty() {
                vec![(anchor.clone(), 0)]
            } else {
                let face = real.restrict(&free, &anchor);
                let face_cube = Cube::new(t, free.len())?;
                find_critical_points_with(&face, &face_cube, cfg)?
                    .into_iter()
                    .map(|p| {
                        let mut loc = anchor.clone();
                        for (&i, x) in free.iter().zip(&p.location) {
                            loc[i] = *x;
                        }
                        (loc, p.index)
                    })
                    .collect()
            };
            for (loc, index) in candidates {
                let (value, grad) = real.gradient(&loc);
                let mut keep = true;
                for &j in &fixed {
                    let out = outward[j] * grad[j];
                    if out.abs() <= cfg.eps_res {
                        return Err(Error::BoundaryDegeneracy {
                            derivative: out,
                            location: loc,
                        });
                    }
                    keep &= out > 0.0;
                }
                if keep {
                    points.push(FacePoint {
                        free: free.clone(),
                        location: loc,
                        value,
                        restricted_index: index,
                    });
                }
            }
        }
    }
    Ok(BoundaryCensus { dim: d, points })
}
