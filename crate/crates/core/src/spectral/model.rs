use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::quad::{self, GaussLegendre};

/// Spectral density family.
#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    /// `r(t) = mass * exp(-|t|^2 / 2)`.
    GaussianIsotropic,
    /// `r(t) = mass * exp(-sum_l s_l^2 t_l^2 / 2)`.
    GaussianAnisotropic { axis_scales: Vec<f64> },
    /// Smooth compactly supported radial bump `exp(-1 / (1 - |l|^2/R^2))`.
    ///
    /// A non-zero `shift` replaces the bump by the symmetric pair centred at
    /// `+shift` and `-shift`, which keeps the density even.
    BumpCompact { radius: f64, shift: Vec<f64> },
}

/// Stationary covariance model given by its spectral density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelDoc", into = "ModelDoc")]
pub struct SpectralModel {
    dim: usize,
    family: Family,
    total_mass: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct ModelParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    axis_scales: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    shift: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelDoc {
    dim: usize,
    family: String,
    #[serde(default)]
    params: ModelParams,
    total_mass: f64,
}

impl TryFrom<ModelDoc> for SpectralModel {
    type Error = Error;

    fn try_from(doc: ModelDoc) -> Result<Self> {
        let family = match doc.family.as_str() {
            "gaussian_isotropic" => Family::GaussianIsotropic,
            "gaussian_anisotropic" => Family::GaussianAnisotropic {
                axis_scales: doc.params.axis_scales.ok_or_else(|| {
                    Error::InvalidModel("gaussian_anisotropic needs params.axis_scales".into())
                })?,
            },
            "bump_compact" => Family::BumpCompact {
                radius: doc.params.radius.ok_or_else(|| {
                    Error::InvalidModel("bump_compact needs params.radius".into())
                })?,
                shift: doc.params.shift.unwrap_or_else(|| vec![0.0; doc.dim]),
            },
            other => return Err(Error::InvalidModel(format!("unknown family `{other}`"))),
        };
        SpectralModel::new(doc.dim, family, doc.total_mass)
    }
}

impl From<SpectralModel> for ModelDoc {
    fn from(m: SpectralModel) -> Self {
        let (family, params) = match m.family {
            Family::GaussianIsotropic => ("gaussian_isotropic", ModelParams::default()),
            Family::GaussianAnisotropic { axis_scales } => (
                "gaussian_anisotropic",
                ModelParams {
                    axis_scales: Some(axis_scales),
                    ..Default::default()
                },
            ),
            Family::BumpCompact { radius, shift } => (
                "bump_compact",
                ModelParams {
                    radius: Some(radius),
                    shift: Some(shift),
                    ..Default::default()
                },
            ),
        };
        ModelDoc {
            dim: m.dim,
            family: family.to_string(),
            params,
            total_mass: m.total_mass,
        }
    }
}

const BUMP_MAX_ATTEMPTS: usize = 10_000;

impl SpectralModel {
    /// Builds a model after structural validation.
    ///
    /// Zero axis scales are accepted so that degenerate fixtures can be
    /// constructed; they are reported by [`SpectralModel::check_assumptions`].
    pub fn new(dim: usize, family: Family, total_mass: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidModel("dim must be >= 1".into()));
        }
        if !(total_mass.is_finite() && total_mass > 0.0) {
            return Err(Error::InvalidModel(format!(
                "total_mass must be positive, got {total_mass}"
            )));
        }
        match &family {
            Family::GaussianIsotropic => {}
            Family::GaussianAnisotropic { axis_scales } => {
                if axis_scales.len() != dim {
                    return Err(Error::InvalidModel(format!(
                        "{} axis scales for dim {dim}",
                        axis_scales.len()
                    )));
                }
                if axis_scales.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
                    return Err(Error::InvalidModel("axis scales must be >= 0".into()));
                }
            }
            Family::BumpCompact { radius, shift } => {
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err(Error::InvalidModel("bump radius must be > 0".into()));
                }
                if shift.len() != dim || shift.iter().any(|c| !c.is_finite()) {
                    return Err(Error::InvalidModel("bump shift must be a finite d-vector".into()));
                }
            }
        }
        Ok(Self {
            dim,
            family,
            total_mass,
        })
    }

    pub fn gaussian_isotropic(dim: usize, total_mass: f64) -> Result<Self> {
        Self::new(dim, Family::GaussianIsotropic, total_mass)
    }

    pub fn gaussian_anisotropic(axis_scales: Vec<f64>, total_mass: f64) -> Result<Self> {
        Self::new(
            axis_scales.len(),
            Family::GaussianAnisotropic { axis_scales },
            total_mass,
        )
    }

    pub fn bump(dim: usize, radius: f64, total_mass: f64) -> Result<Self> {
        Self::new(
            dim,
            Family::BumpCompact {
                radius,
                shift: vec![0.0; dim],
            },
            total_mass,
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Per-axis scales of a gaussian family.
    pub(crate) fn gaussian_scales(&self) -> Option<Vec<f64>> {
        match &self.family {
            Family::GaussianIsotropic => Some(vec![1.0; self.dim]),
            Family::GaussianAnisotropic { axis_scales } => Some(axis_scales.clone()),
            Family::BumpCompact { .. } => None,
        }
    }

    /// Radius outside which the spectral density is zero or negligible
    /// (below `exp(-72)` relative, for the gaussian families).
    pub fn spectral_cutoff(&self) -> f64 {
        match &self.family {
            Family::BumpCompact { radius, shift } => radius + shift.iter().map(|c| c * c).sum::<f64>().sqrt(),
            _ => 12.0 * self.gaussian_scales().expect("gaussian").iter().cloned().fold(0.0, f64::max),
        }
    }

    /// Spectral density `f(lambda)`.
    pub fn density(&self, lambda: &[f64]) -> f64 {
        assert_eq!(lambda.len(), self.dim);
        match &self.family {
            Family::GaussianIsotropic | Family::GaussianAnisotropic { .. } => {
                let scales = self.gaussian_scales().expect("gaussian");
                let mut f = self.total_mass;
                for (&l, &s) in lambda.iter().zip(&scales) {
                    if s == 0.0 {
                        // point mass in this axis: no density
                        return if l == 0.0 { f64::INFINITY } else { 0.0 };
                    }
                    f *= (-(l / s).powi(2) / 2.0).exp() / (s * (2.0 * std::f64::consts::PI).sqrt());
                }
                f
            }
            Family::BumpCompact { radius, shift } => {
                let z = bump_normalizer(self.dim, *radius);
                let norm = |sign: f64| -> f64 {
                    lambda
                        .iter()
                        .zip(shift)
                        .map(|(l, c)| (l - sign * c).powi(2))
                        .sum::<f64>()
                        .sqrt()
                };
                let pair = 0.5 * (bump_profile(norm(1.0), *radius) + bump_profile(norm(-1.0), *radius));
                self.total_mass * pair / z
            }
        }
    }

    /// `int lambda^alpha f(lambda) d lambda`.
    pub fn spectral_moment(&self, alpha: &[usize]) -> Result<f64> {
        if alpha.len() != self.dim {
            return Err(Error::Domain(format!(
                "multi-index of length {} for dim {}",
                alpha.len(),
                self.dim
            )));
        }
        if alpha.iter().sum::<usize>() > 4 {
            return Err(Error::Domain("spectral moments are provided up to order 4".into()));
        }
        match &self.family {
            Family::GaussianIsotropic | Family::GaussianAnisotropic { .. } => {
                let scales = self.gaussian_scales().expect("gaussian");
                let mut m = self.total_mass;
                for (&a, &s) in alpha.iter().zip(&scales) {
                    m *= gaussian_axis_moment(a, s);
                }
                Ok(m)
            }
            Family::BumpCompact { radius, shift } => {
                // binomial expansion of 0.5 [(l + c)^alpha + (l - c)^alpha] over
                // the centred radial bump
                let mut total = 0.0;
                for beta in sub_indices(alpha) {
                    let rest: usize = alpha.iter().zip(&beta).map(|(a, b)| a - b).sum();
                    if rest % 2 == 1 {
                        continue;
                    }
                    let mut coef = 1.0;
                    for ((&a, &b), &c) in alpha.iter().zip(&beta).zip(shift) {
                        coef *= binomial(a, b) * c.powi((a - b) as i32);
                    }
                    if coef == 0.0 {
                        continue;
                    }
                    total += coef * centered_bump_moment(self.dim, *radius, &beta)?;
                }
                Ok(self.total_mass * total)
            }
        }
    }

    /// Matrix of second spectral moments, equal to `Var(X'(t))`.
    pub fn second_moment_matrix(&self) -> Result<Vec<Vec<f64>>> {
        let d = self.dim;
        let mut m = vec![vec![0.0; d]; d];
        for i in 0..d {
            for j in i..d {
                let mut a = vec![0; d];
                a[i] += 1;
                a[j] += 1;
                let v = self.spectral_moment(&a)?;
                m[i][j] = v;
                m[j][i] = v;
            }
        }
        Ok(m)
    }

    /// `1 / sqrt(largest eigenvalue of Var(X'))`.
    pub fn correlation_length(&self) -> Result<f64> {
        let m2 = self.second_moment_matrix()?;
        let mat = nalgebra::DMatrix::from_fn(self.dim, self.dim, |i, j| m2[i][j]);
        let top = mat
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        if top <= 0.0 {
            return Err(Error::DegenerateModel {
                block: "Var(X')",
                min_pivot: top,
            });
        }
        Ok(1.0 / top.sqrt())
    }

    /// Draws one frequency from `f / total_mass`.
    pub fn sample_frequency<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>> {
        match &self.family {
            Family::GaussianIsotropic | Family::GaussianAnisotropic { .. } => {
                let scales = self.gaussian_scales().expect("gaussian");
                Ok(scales
                    .iter()
                    .map(|&s| s * rng.sample::<f64, _>(StandardNormal))
                    .collect())
            }
            Family::BumpCompact { radius, shift } => {
                for _ in 0..BUMP_MAX_ATTEMPTS {
                    let cand: Vec<f64> = (0..self.dim)
                        .map(|_| radius * (2.0 * rng.random::<f64>() - 1.0))
                        .collect();
                    let rho = cand.iter().map(|x| x * x).sum::<f64>().sqrt();
                    // accept with probability b(rho) / b(0)
                    let accept = bump_profile(rho, *radius) * std::f64::consts::E;
                    if rng.random::<f64>() < accept {
                        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                        return Ok(cand.iter().zip(shift).map(|(x, c)| x + sign * c).collect());
                    }
                }
                Err(Error::Sampler {
                    attempts: BUMP_MAX_ATTEMPTS,
                })
            }
        }
    }

    /// Nodes and weights (weight already multiplied by the density) of a
    /// tensor Gauss-Legendre rule covering the support of a bump density.
    pub(crate) fn bump_rule(&self) -> Vec<(Vec<f64>, f64)> {
        let Family::BumpCompact { radius, shift } = &self.family else {
            return Vec::new();
        };
        let d = self.dim;
        let z = bump_normalizer(d, *radius);
        let mut base: Vec<(Vec<f64>, f64)> = Vec::new();
        match d {
            1 => {
                for (x, w) in GaussLegendre::new(16).composite(-radius, *radius, 24) {
                    base.push((vec![x], w));
                }
            }
            2 => {
                // polar: composite radial rule times trapezoid in angle
                let radial = GaussLegendre::new(16).composite(0.0, *radius, 16);
                let n_ang = 128;
                for (r, w) in radial {
                    for k in 0..n_ang {
                        let a = 2.0 * std::f64::consts::PI * k as f64 / n_ang as f64;
                        let wa = w * r * 2.0 * std::f64::consts::PI / n_ang as f64;
                        base.push((vec![r * a.cos(), r * a.sin()], wa));
                    }
                }
            }
            _ => {
                let axis = GaussLegendre::new(16).composite(-radius, *radius, 4);
                let n = axis.len();
                let mut idx = vec![0usize; d];
                'outer: loop {
                    let point: Vec<f64> = idx.iter().map(|&i| axis[i].0).collect();
                    let w: f64 = idx.iter().map(|&i| axis[i].1).product();
                    base.push((point, w));
                    for k in 0..d {
                        idx[k] += 1;
                        if idx[k] < n {
                            continue 'outer;
                        }
                        idx[k] = 0;
                    }
                    break;
                }
            }
        }
        let centred = shift.iter().all(|c| *c == 0.0);
        let mut out = Vec::new();
        for (point, w) in base {
            let rho = point.iter().map(|x| x * x).sum::<f64>().sqrt();
            let b = bump_profile(rho, *radius);
            if b <= 0.0 {
                continue;
            }
            let weight = self.total_mass * w * b / z;
            if centred {
                out.push((point, weight));
            } else {
                let plus = point.iter().zip(shift).map(|(x, c)| x + c).collect();
                let minus = point.iter().zip(shift).map(|(x, c)| x - c).collect();
                out.push((plus, 0.5 * weight));
                out.push((minus, 0.5 * weight));
            }
        }
        out
    }
}

fn gaussian_axis_moment(a: usize, s: f64) -> f64 {
    if a % 2 == 1 {
        return 0.0;
    }
    let double_fact: f64 = (1..a).step_by(2).map(|k| k as f64).product();
    s.powi(a as i32) * double_fact
}

pub(crate) fn bump_profile(rho: f64, radius: f64) -> f64 {
    let x = rho / radius;
    if x >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - x * x)).exp()
    }
}

fn sphere_area(d: usize) -> f64 {
    2.0 * std::f64::consts::PI.powf(d as f64 / 2.0) / gamma(d as f64 / 2.0)
}

fn radial_integral(power: usize, radius: f64) -> Result<f64> {
    quad::adaptive(
        |r| r.powi(power as i32) * bump_profile(r, radius),
        0.0,
        radius,
        1e-300,
        1e-13,
    )
}

fn bump_normalizer(d: usize, radius: f64) -> f64 {
    sphere_area(d) * radial_integral(d - 1, radius).expect("bump normalizer quadrature")
}

/// Moment of the normalized centred bump (unit mass).
fn centered_bump_moment(d: usize, radius: f64, beta: &[usize]) -> Result<f64> {
    if beta.iter().any(|b| b % 2 == 1) {
        return Ok(0.0);
    }
    let order: usize = beta.iter().sum();
    let angular = 2.0 * beta.iter().map(|&b| gamma((b as f64 + 1.0) / 2.0)).product::<f64>()
        / gamma((order + d) as f64 / 2.0);
    let radial = radial_integral(order + d - 1, radius)?;
    Ok(angular * radial / bump_normalizer(d, radius))
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn sub_indices(alpha: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for &a in alpha {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..=a).map(move |b| {
                    let mut p = prefix.clone();
                    p.push(b);
                    p
                })
            })
            .collect();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gauss1() -> SpectralModel {
        SpectralModel::gaussian_isotropic(1, 1.0).unwrap()
    }

    #[test]
    fn gaussian_moments_match_quadrature_oracle() {
        let m = gauss1();
        assert_eq!(m.spectral_moment(&[1]).unwrap(), 0.0);
        for (order, expected) in [(2usize, 1.0), (4, 3.0)] {
            let oracle = quad::adaptive(
                |l| l.powi(order as i32) * m.density(&[l]),
                -40.0,
                40.0,
                1e-14,
                1e-14,
            )
            .unwrap();
            assert!((oracle - expected).abs() < 1e-10);
            assert!((m.spectral_moment(&[order]).unwrap() - oracle).abs() < 1e-10);
        }
    }

    #[test]
    fn bump_moments_match_tensor_quadrature() {
        let m = SpectralModel::bump(2, 2.0, 1.5).unwrap();
        let rule = m.bump_rule();
        for alpha in [[0, 0], [2, 0], [2, 2], [4, 0], [1, 1], [3, 0]] {
            let quad: f64 = rule
                .iter()
                .map(|(l, w)| w * l[0].powi(alpha[0] as i32) * l[1].powi(alpha[1] as i32))
                .sum();
            let exact = m.spectral_moment(&alpha).unwrap();
            assert!((quad - exact).abs() < 1e-8, "{alpha:?}: {quad} vs {exact}");
        }
        assert!((m.spectral_moment(&[0, 0]).unwrap() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn shifted_bump_moments_and_density() {
        let fam = Family::BumpCompact {
            radius: 1.0,
            shift: vec![2.0],
        };
        let m = SpectralModel::new(1, fam, 1.0).unwrap();
        assert_eq!(m.density(&[0.0]), 0.0);
        assert!(m.density(&[2.0]) > 0.0);
        assert_eq!(m.density(&[1.5]), m.density(&[-1.5]));
        let rule = m.bump_rule();
        for a in 0..=4usize {
            let quad: f64 = rule.iter().map(|(l, w)| w * l[0].powi(a as i32)).sum();
            let exact = m.spectral_moment(&[a]).unwrap();
            assert!((quad - exact).abs() < 1e-8, "{a}: {quad} vs {exact}");
        }
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let models = [
            gauss1(),
            SpectralModel::gaussian_anisotropic(vec![1.0, 2.0 / 3.0], 0.1 + 0.2).unwrap(),
            SpectralModel::bump(3, std::f64::consts::PI, 1e-3).unwrap(),
        ];
        for m in models {
            let s = m.to_json().unwrap();
            let back = SpectralModel::from_json(&s).unwrap();
            assert_eq!(back, m);
            assert_eq!(back.to_json().unwrap(), s);
        }
        let doc = r#"{"dim":2,"family":"gaussian_anisotropic","params":{"axis_scales":[1,2]},"total_mass":1}"#;
        let m = SpectralModel::from_json(doc).unwrap();
        assert_eq!(m.family(), &Family::GaussianAnisotropic { axis_scales: vec![1.0, 2.0] });
        assert!(SpectralModel::from_json(r#"{"dim":1,"family":"matern","total_mass":1}"#).is_err());
    }

    #[test]
    fn bump_sampler_stays_in_support() {
        let m = SpectralModel::bump(2, 1.5, 1.0).unwrap();
        let mut rng = crate::rng::stream_rng(3, 0);
        for _ in 0..1000 {
            let l = m.sample_frequency(&mut rng).unwrap();
            assert!(l.iter().map(|x| x * x).sum::<f64>() < 1.5 * 1.5);
        }
    }
}
