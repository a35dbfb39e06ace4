//! Random-wave synthesis of stationary Gaussian fields.
//!
//! A realization is the finite superposition
//! `X(t) = a * sum_j [xi_j cos(l_j . t) + eta_j sin(l_j . t)]` with
//! `a = sqrt(total_mass / M)`, frequencies drawn from `f / total_mass` and
//! standard normal `(xi_j, eta_j)`. Conditional on the frequencies the field
//! is exactly Gaussian and stationary, and every derivative is available in
//! closed form.

use std::io::{Read, Write};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::spectral::SpectralModel;

/// Default number of atoms per realization.
pub const DEFAULT_ATOMS: usize = 4000;

/// Value, gradient and Hessian (row-major `d x d`) at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    pub value: f64,
    pub grad: Vec<f64>,
    pub hess: Vec<f64>,
}

impl Jet {
    pub fn hess_at(&self, i: usize, j: usize) -> f64 {
        self.hess[i * self.grad.len() + j]
    }
}

/// A finite random-wave realization.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldRealization {
    model: SpectralModel,
    dim: usize,
    seed: u64,
    amplitude: f64,
    /// `M x d`, row-major.
    freqs: Vec<f64>,
    xi: Vec<f64>,
    eta: Vec<f64>,
    cos_coef: Vec<f64>,
    sin_coef: Vec<f64>,
}

/// Draws a realization; fully determined by `(model, atoms, seed)`.
pub fn synthesize(model: &SpectralModel, atoms: usize, seed: u64) -> Result<FieldRealization> {
    if atoms == 0 {
        return Err(Error::Domain("a realization needs at least one atom".into()));
    }
    let d = model.dim();
    let mut rng = stream_rng(seed, 0);
    let mut freqs = Vec::with_capacity(atoms * d);
    let mut xi = Vec::with_capacity(atoms);
    let mut eta = Vec::with_capacity(atoms);
    for _ in 0..atoms {
        freqs.extend(model.sample_frequency(&mut rng)?);
        xi.push(rng.sample::<f64, _>(StandardNormal));
        eta.push(rng.sample::<f64, _>(StandardNormal));
    }
    let amplitude = (model.total_mass() / atoms as f64).sqrt();
    Ok(FieldRealization::from_parts(
        model.clone(),
        seed,
        amplitude,
        freqs,
        xi,
        eta,
    ))
}

impl FieldRealization {
    /// A realization with explicit atoms (`freqs` is `M x d`, row-major).
    pub fn from_atoms(
        model: &SpectralModel,
        seed: u64,
        freqs: Vec<f64>,
        xi: Vec<f64>,
        eta: Vec<f64>,
    ) -> Result<Self> {
        let m = xi.len();
        if m == 0 || eta.len() != m || freqs.len() != m * model.dim() {
            return Err(Error::Domain(format!(
                "atom arrays disagree: {} frequencies, {} xi, {} eta for d = {}",
                freqs.len(),
                m,
                eta.len(),
                model.dim()
            )));
        }
        let amplitude = (model.total_mass() / m as f64).sqrt();
        Ok(Self::from_parts(model.clone(), seed, amplitude, freqs, xi, eta))
    }

    fn from_parts(
        model: SpectralModel,
        seed: u64,
        amplitude: f64,
        freqs: Vec<f64>,
        xi: Vec<f64>,
        eta: Vec<f64>,
    ) -> Self {
        let dim = if xi.is_empty() { model.dim() } else { freqs.len() / xi.len() };
        let cos_coef = xi.iter().map(|x| amplitude * x).collect();
        let sin_coef = eta.iter().map(|x| amplitude * x).collect();
        Self {
            model,
            dim,
            seed,
            amplitude,
            freqs,
            xi,
            eta,
            cos_coef,
            sin_coef,
        }
    }

    pub fn model(&self) -> &SpectralModel {
        &self.model
    }

    /// Dimension of the parameter space (smaller than the model's for face
    /// restrictions).
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn atoms(&self) -> usize {
        self.xi.len()
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn frequency(&self, j: usize) -> &[f64] {
        &self.freqs[j * self.dim..(j + 1) * self.dim]
    }

    /// `(xi_j, eta_j)`.
    pub fn weights(&self, j: usize) -> (f64, f64) {
        (self.xi[j], self.eta[j])
    }

    pub fn value(&self, t: &[f64]) -> f64 {
        let d = self.dim;
        let mut v = 0.0;
        for j in 0..self.atoms() {
            let l = &self.freqs[j * d..(j + 1) * d];
            let th: f64 = l.iter().zip(t).map(|(a, b)| a * b).sum();
            let (s, c) = th.sin_cos();
            v += self.cos_coef[j] * c + self.sin_coef[j] * s;
        }
        v
    }

    /// Value and gradient.
    pub fn gradient(&self, t: &[f64]) -> (f64, Vec<f64>) {
        let d = self.dim;
        let mut v = 0.0;
        let mut g = vec![0.0; d];
        for j in 0..self.atoms() {
            let l = &self.freqs[j * d..(j + 1) * d];
            let th: f64 = l.iter().zip(t).map(|(a, b)| a * b).sum();
            let (s, c) = th.sin_cos();
            let (a, b) = (self.cos_coef[j], self.sin_coef[j]);
            v += a * c + b * s;
            let ds = b * c - a * s;
            for (gi, li) in g.iter_mut().zip(l) {
                *gi += li * ds;
            }
        }
        (v, g)
    }

    /// Closed-form value, gradient and Hessian at `t`.
    pub fn evaluate(&self, t: &[f64]) -> Jet {
        let d = self.dim;
        assert_eq!(t.len(), d);
        let mut value = 0.0;
        let mut grad = vec![0.0; d];
        let mut upper = vec![0.0; d * (d + 1) / 2];
        for j in 0..self.atoms() {
            let l = &self.freqs[j * d..(j + 1) * d];
            let th: f64 = l.iter().zip(t).map(|(a, b)| a * b).sum();
            let (s, c) = th.sin_cos();
            let (a, b) = (self.cos_coef[j], self.sin_coef[j]);
            let cv = a * c + b * s;
            let sv = b * c - a * s;
            value += cv;
            let mut k = 0;
            for p in 0..d {
                grad[p] += l[p] * sv;
                for q in p..d {
                    upper[k] -= l[p] * l[q] * cv;
                    k += 1;
                }
            }
        }
        let mut hess = vec![0.0; d * d];
        let mut k = 0;
        for p in 0..d {
            for q in p..d {
                hess[p * d + q] = upper[k];
                hess[q * d + p] = upper[k];
                k += 1;
            }
        }
        Jet { value, grad, hess }
    }

    /// The realization `t -> X(t + s)`, with the shift absorbed into the
    /// atom weights.
    pub fn shifted(&self, s: &[f64]) -> FieldRealization {
        let d = self.dim;
        assert_eq!(s.len(), d);
        let mut xi = Vec::with_capacity(self.atoms());
        let mut eta = Vec::with_capacity(self.atoms());
        for j in 0..self.atoms() {
            let phi: f64 = self.frequency(j).iter().zip(s).map(|(a, b)| a * b).sum();
            let (sp, cp) = phi.sin_cos();
            xi.push(self.xi[j] * cp + self.eta[j] * sp);
            eta.push(self.eta[j] * cp - self.xi[j] * sp);
        }
        Self::from_parts(
            self.model.clone(),
            self.seed,
            self.amplitude,
            self.freqs.clone(),
            xi,
            eta,
        )
    }

    /// Restriction to the coordinates in `free`, every other coordinate `i`
    /// being frozen at `fixed[i]`.
    pub fn restrict(&self, free: &[usize], fixed: &[f64]) -> FieldRealization {
        let d = self.dim;
        assert_eq!(fixed.len(), d);
        let mut freqs = Vec::with_capacity(self.atoms() * free.len());
        let mut xi = Vec::with_capacity(self.atoms());
        let mut eta = Vec::with_capacity(self.atoms());
        for j in 0..self.atoms() {
            let l = self.frequency(j);
            let phi: f64 = (0..d)
                .filter(|i| !free.contains(i))
                .map(|i| l[i] * fixed[i])
                .sum();
            let (sp, cp) = phi.sin_cos();
            xi.push(self.xi[j] * cp + self.eta[j] * sp);
            eta.push(self.eta[j] * cp - self.xi[j] * sp);
            freqs.extend(free.iter().map(|&i| l[i]));
        }
        let mut r = Self::from_parts(self.model.clone(), self.seed, self.amplitude, freqs, xi, eta);
        r.dim = free.len();
        r
    }

    /// Evaluates value, gradient and Hessian on the tensor grid
    /// `axes[0] x ... x axes[d-1]`, each axis uniformly spaced.
    ///
    /// Phases are advanced by complex rotation along each axis (re-anchored
    /// periodically), which replaces almost all trigonometric calls.
    pub fn evaluate_grid(&self, axes: &[UniformAxis]) -> GridJets {
        let d = self.dim;
        assert_eq!(axes.len(), d);
        let shape: Vec<usize> = axes.iter().map(|a| a.len).collect();
        let total: usize = shape.iter().product();
        let nh = d * (d + 1) / 2;
        let mut value = vec![0.0; total];
        let mut grad = vec![vec![0.0; total]; d];
        let mut hess = vec![vec![0.0; total]; nh];
        let mut phasors: Vec<Vec<(f64, f64)>> = axes.iter().map(|a| vec![(0.0, 0.0); a.len]).collect();
        // product of the phasors of all axes but the last, per outer index
        let inner = *shape.last().unwrap_or(&1);
        let outer = total / inner.max(1);
        let mut outer_ph = vec![(1.0, 0.0); outer];
        let mut c_buf = vec![0.0; inner];
        let mut s_buf = vec![0.0; inner];
        for j in 0..self.atoms() {
            let l = self.frequency(j);
            for (p, ax) in axes.iter().enumerate() {
                ax.phasors(l[p], &mut phasors[p]);
            }
            // outer phasors over axes 0..d-1 (row-major)
            for (o, slot) in outer_ph.iter_mut().enumerate() {
                let mut z = (1.0, 0.0);
                let mut rem = o;
                for p in (0..d - 1).rev() {
                    let k = rem % shape[p];
                    rem /= shape[p];
                    z = cmul(z, phasors[p][k]);
                }
                *slot = z;
            }
            let (a, b) = (self.cos_coef[j], self.sin_coef[j]);
            let last = &phasors[d - 1];
            for (o, &zo) in outer_ph.iter().enumerate() {
                for (k, &zl) in last.iter().enumerate() {
                    let (re, im) = cmul(zo, zl);
                    c_buf[k] = a * re + b * im;
                    s_buf[k] = b * re - a * im;
                }
                let base = o * inner;
                let vs = &mut value[base..base + inner];
                for (v, c) in vs.iter_mut().zip(&c_buf) {
                    *v += c;
                }
                let mut h = 0;
                for p in 0..d {
                    let lp = l[p];
                    for (g, s) in grad[p][base..base + inner].iter_mut().zip(&s_buf) {
                        *g += lp * s;
                    }
                    for q in p..d {
                        let w = lp * l[q];
                        for (hv, c) in hess[h][base..base + inner].iter_mut().zip(&c_buf) {
                            *hv -= w * c;
                        }
                        h += 1;
                    }
                }
            }
        }
        GridJets {
            shape,
            axes: axes.to_vec(),
            value,
            grad,
            hess,
        }
    }

    /// Field values only on a tensor grid.
    pub fn values_on_grid(&self, axes: &[UniformAxis]) -> Vec<f64> {
        let d = self.dim;
        assert_eq!(axes.len(), d);
        let shape: Vec<usize> = axes.iter().map(|a| a.len).collect();
        let total: usize = shape.iter().product();
        let inner = *shape.last().unwrap_or(&1);
        let outer = total / inner.max(1);
        let mut value = vec![0.0; total];
        let mut phasors: Vec<Vec<(f64, f64)>> = axes.iter().map(|a| vec![(0.0, 0.0); a.len]).collect();
        for j in 0..self.atoms() {
            let l = self.frequency(j);
            for (p, ax) in axes.iter().enumerate() {
                ax.phasors(l[p], &mut phasors[p]);
            }
            let (a, b) = (self.cos_coef[j], self.sin_coef[j]);
            for o in 0..outer {
                let mut zo = (1.0, 0.0);
                let mut rem = o;
                for p in (0..d - 1).rev() {
                    let k = rem % shape[p];
                    rem /= shape[p];
                    zo = cmul(zo, phasors[p][k]);
                }
                let (ca, cb) = (a * zo.0 + b * zo.1, b * zo.0 - a * zo.1);
                let base = o * inner;
                for (v, &(re, im)) in value[base..base + inner].iter_mut().zip(&phasors[d - 1]) {
                    *v += ca * re + cb * im;
                }
            }
        }
        value
    }

    /// Binary dump: `M` as little-endian u64, then `M` records of `d + 2`
    /// little-endian f64 (`l_1..l_d, xi, eta`).
    pub fn write_atoms<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&(self.atoms() as u64).to_le_bytes())?;
        for j in 0..self.atoms() {
            for &x in self.frequency(j) {
                w.write_all(&x.to_le_bytes())?;
            }
            w.write_all(&self.xi[j].to_le_bytes())?;
            w.write_all(&self.eta[j].to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads a binary dump written by [`FieldRealization::write_atoms`].
    pub fn read_atoms<R: Read>(model: &SpectralModel, seed: u64, mut r: R) -> Result<Self> {
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let m = u64::from_le_bytes(b8) as usize;
        let d = model.dim();
        let mut freqs = Vec::with_capacity(m * d);
        let mut xi = Vec::with_capacity(m);
        let mut eta = Vec::with_capacity(m);
        let mut next = || -> Result<f64> {
            r.read_exact(&mut b8)?;
            Ok(f64::from_le_bytes(b8))
        };
        for _ in 0..m {
            for _ in 0..d {
                freqs.push(next()?);
            }
            xi.push(next()?);
            eta.push(next()?);
        }
        if m == 0 {
            return Err(Error::Domain("atom dump is empty".into()));
        }
        let amplitude = (model.total_mass() / m as f64).sqrt();
        Ok(Self::from_parts(model.clone(), seed, amplitude, freqs, xi, eta))
    }

    /// JSON form of the atom list.
    pub fn to_atom_dump(&self) -> AtomDump {
        AtomDump {
            seed: self.seed,
            dim: self.dim,
            m: self.atoms(),
            amplitude: self.amplitude,
            atoms: (0..self.atoms())
                .map(|j| {
                    let mut rec = self.frequency(j).to_vec();
                    rec.push(self.xi[j]);
                    rec.push(self.eta[j]);
                    rec
                })
                .collect(),
        }
    }
}

/// JSON atom dump for replay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomDump {
    pub seed: u64,
    pub dim: usize,
    pub m: usize,
    pub amplitude: f64,
    pub atoms: Vec<Vec<f64>>,
}

fn cmul(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    (a.0 * b.0 - a.1 * b.1, a.0 * b.1 + a.1 * b.0)
}

/// Uniformly spaced axis `start + k * step`, `k = 0..len`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformAxis {
    pub start: f64,
    pub step: f64,
    pub len: usize,
}

const REANCHOR: usize = 64;

impl UniformAxis {
    /// `len` points spanning `[lo, hi]` inclusive.
    pub fn spanning(lo: f64, hi: f64, len: usize) -> Self {
        assert!(len >= 1);
        let step = if len == 1 { 0.0 } else { (hi - lo) / (len - 1) as f64 };
        Self { start: lo, step, len }
    }

    pub fn point(&self, k: usize) -> f64 {
        self.start + k as f64 * self.step
    }

    fn phasors(&self, freq: f64, out: &mut [(f64, f64)]) {
        let (ss, cs) = (freq * self.step).sin_cos();
        let rot = (cs, ss);
        let mut z = (0.0, 0.0);
        for (k, slot) in out.iter_mut().enumerate() {
            if k % REANCHOR == 0 {
                let (s, c) = (freq * self.point(k)).sin_cos();
                z = (c, s);
            } else {
                z = cmul(z, rot);
            }
            *slot = z;
        }
    }
}

/// Value, gradient and Hessian on a tensor grid (row-major, last axis
/// fastest). Hessian components are indexed by the upper-triangle order.
#[derive(Debug, Clone)]
pub struct GridJets {
    pub shape: Vec<usize>,
    pub axes: Vec<UniformAxis>,
    pub value: Vec<f64>,
    pub grad: Vec<Vec<f64>>,
    pub hess: Vec<Vec<f64>>,
}

impl GridJets {
    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    /// Multi-index of flat position `k`.
    pub fn index(&self, mut k: usize) -> Vec<usize> {
        let mut idx = vec![0; self.shape.len()];
        for p in (0..self.shape.len()).rev() {
            idx[p] = k % self.shape[p];
            k /= self.shape[p];
        }
        idx
    }

    pub fn point(&self, k: usize) -> Vec<f64> {
        self.index(k)
            .iter()
            .zip(&self.axes)
            .map(|(&i, ax)| ax.point(i))
            .collect()
    }

    pub fn jet(&self, k: usize) -> Jet {
        let d = self.shape.len();
        let mut hess = vec![0.0; d * d];
        let mut h = 0;
        for p in 0..d {
            for q in p..d {
                hess[p * d + q] = self.hess[h][k];
                hess[q * d + p] = self.hess[h][k];
                h += 1;
            }
        }
        Jet {
            value: self.value[k],
            grad: self.grad.iter().map(|g| g[k]).collect(),
            hess,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats;

    fn gauss(d: usize) -> SpectralModel {
        SpectralModel::gaussian_isotropic(d, 1.0).unwrap()
    }

    #[test]
    fn same_seed_same_atoms() {
        let m = gauss(2);
        let a = synthesize(&m, 100, 42).unwrap();
        let b = synthesize(&m, 100, 42).unwrap();
        assert_eq!(a, b);
        let c = synthesize(&m, 100, 43).unwrap();
        assert_ne!(a, c);
        assert!(synthesize(&m, 0, 1).is_err());
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let m = gauss(2);
        let r = synthesize(&m, 300, 7).unwrap();
        let t = [0.3, -1.2];
        let jet = r.evaluate(&t);
        let h = 1e-5;
        for i in 0..2 {
            let mut tp = t;
            let mut tm = t;
            tp[i] += h;
            tm[i] -= h;
            let fd = (r.value(&tp) - r.value(&tm)) / (2.0 * h);
            assert!((fd - jet.grad[i]).abs() <= 1e-6, "grad {i}");
            let gp = r.evaluate(&tp).grad;
            let gm = r.evaluate(&tm).grad;
            for j in 0..2 {
                let fd2 = (gp[j] - gm[j]) / (2.0 * h);
                assert!((fd2 - jet.hess_at(i, j)).abs() <= 1e-4, "hess {i}{j}");
            }
        }
        assert_eq!(jet.hess_at(0, 1), jet.hess_at(1, 0));
        assert_eq!(r.evaluate(&t), jet);
    }

    #[test]
    fn shift_absorbs_phases() {
        let m = gauss(2);
        let r = synthesize(&m, 200, 9).unwrap();
        let mut rng = stream_rng(5, 1);
        for _ in 0..10 {
            let s = [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)];
            let t = [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)];
            let moved = r.shifted(&s);
            let a = moved.evaluate(&t);
            let b = r.evaluate(&[t[0] + s[0], t[1] + s[1]]);
            assert!((a.value - b.value).abs() < 1e-11);
            for k in 0..4 {
                assert!((a.hess[k] - b.hess[k]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn restriction_matches_full_field() {
        let m = gauss(3);
        let r = synthesize(&m, 200, 11).unwrap();
        let face = r.restrict(&[0, 2], &[0.0, 1.5, 0.0]);
        assert_eq!(face.dim(), 2);
        let j = face.evaluate(&[0.4, -0.3]);
        let full = r.evaluate(&[0.4, 1.5, -0.3]);
        assert!((j.value - full.value).abs() < 1e-12);
        assert!((j.grad[1] - full.grad[2]).abs() < 1e-12);
        assert!((j.hess_at(0, 1) - full.hess_at(0, 2)).abs() < 1e-11);
    }

    #[test]
    fn grid_evaluation_matches_pointwise() {
        for d in 1..=3 {
            let r = synthesize(&gauss(d), 150, 3).unwrap();
            let axes: Vec<UniformAxis> = (0..d)
                .map(|p| UniformAxis::spanning(-2.0 - p as f64, 2.0, [150, 9, 5][p]))
                .collect();
            let grid = r.evaluate_grid(&axes);
            let values = r.values_on_grid(&axes);
            for k in (0..grid.len()).step_by(7) {
                let p = grid.point(k);
                let exact = r.evaluate(&p);
                let got = grid.jet(k);
                assert!((exact.value - got.value).abs() < 1e-10);
                assert!((exact.value - values[k]).abs() < 1e-10);
                for i in 0..d {
                    assert!((exact.grad[i] - got.grad[i]).abs() < 1e-10);
                }
                for i in 0..d * d {
                    assert!((exact.hess[i] - got.hess[i]).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn atom_dump_round_trips() {
        let m = gauss(2);
        let r = synthesize(&m, 50, 1).unwrap();
        let mut buf = Vec::new();
        r.write_atoms(&mut buf).unwrap();
        assert_eq!(buf.len(), 8 + 50 * 4 * 8);
        let back = FieldRealization::read_atoms(&m, 1, buf.as_slice()).unwrap();
        assert_eq!(back, r);
        let dump = r.to_atom_dump();
        let json = serde_json::to_string(&dump).unwrap();
        let parsed: AtomDump = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed, dump);
    }

    #[test]
    fn variance_and_correlation_over_seeds() {
        // 500 realizations, M = 4000
        let m = gauss(1);
        let n = 500;
        let mut x0 = Vec::with_capacity(n);
        let mut x1 = Vec::with_capacity(n);
        for s in 0..n as u64 {
            let r = synthesize(&m, DEFAULT_ATOMS, crate::rng::derive_seed(17, s)).unwrap();
            x0.push(r.value(&[0.0]));
            x1.push(r.value(&[1.0]));
        }
        let sq: Vec<f64> = x0.iter().map(|x| x * x).collect();
        let var = stats::mean(&sq);
        let se = stats::stderr(&sq);
        assert!((var - 1.0).abs() <= 3.0 * se, "var {var} +/- {se}");
        let prod: Vec<f64> = x0.iter().zip(&x1).map(|(a, b)| a * b).collect();
        let cov = stats::mean(&prod);
        let se = stats::stderr(&prod);
        let target = (-0.5f64).exp();
        assert!((cov - target).abs() <= 3.0 * se, "cov {cov} +/- {se}");
    }

    #[test]
    fn empirical_jet_covariance_matches_xi() {
        let m = gauss(1);
        let cs = m.covariance_structure().unwrap();
        let rows: Vec<Vec<f64>> = (0..600u64)
            .map(|s| {
                let r = synthesize(&m, DEFAULT_ATOMS, crate::rng::derive_seed(99, s)).unwrap();
                let j = r.evaluate(&[0.0]);
                vec![j.grad[0], j.hess[0], j.value]
            })
            .collect();
        for a in 0..3 {
            for b in 0..3 {
                let prods: Vec<f64> = rows.iter().map(|r| r[a] * r[b]).collect();
                let est = stats::mean(&prods);
                let se = stats::stderr(&prods);
                assert!(
                    (est - cs.xi[(a, b)]).abs() <= 4.0 * se,
                    "({a},{b}): {est} vs {} +/- {se}",
                    cs.xi[(a, b)]
                );
            }
        }
    }
}
