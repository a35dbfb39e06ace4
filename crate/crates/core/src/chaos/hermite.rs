use std::cmp::Ordering;
use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest chaos order accepted by the diagram formula.
pub const MEHLER_ORDER_LIMIT: usize = 8;

/// Probabilists' Hermite polynomial `He_n(x)`.
pub fn hermite(n: usize, x: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, x);
    if n == 0 {
        return prev;
    }
    for k in 1..n {
        let next = x * cur - k as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// `He_0(x), ..., He_n(x)`.
pub fn hermite_all(n: usize, x: f64, out: &mut [f64]) {
    out[0] = 1.0;
    if n >= 1 {
        out[1] = x;
    }
    for k in 1..n {
        out[k + 1] = x * out[k] - k as f64 * out[k - 1];
    }
}

/// `He_n(0)`: zero for odd `n`, `(-1)^(n/2) (n-1)!!` otherwise.
pub fn hermite_at_zero(n: usize) -> f64 {
    if n % 2 == 1 {
        return 0.0;
    }
    let dfact: f64 = (1..n).step_by(2).map(|k| k as f64).product();
    if (n / 2) % 2 == 1 {
        -dfact
    } else {
        dfact
    }
}

pub(crate) fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// A multi-index `n in N^len`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MultiIndex(pub Vec<usize>);

impl MultiIndex {
    pub fn zeros(len: usize) -> Self {
        Self(vec![0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `|n|`.
    pub fn order(&self) -> usize {
        self.0.iter().sum()
    }

    /// `n! = prod n_i!`.
    pub fn factorial(&self) -> f64 {
        self.0.iter().map(|&n| factorial(n)).product()
    }

    pub fn has_odd_entry(&self) -> bool {
        self.0.iter().any(|n| n % 2 == 1)
    }

    /// Colexicographic order: the last coordinate is most significant.
    pub fn colex_cmp(&self, other: &Self) -> Ordering {
        self.0.iter().rev().cmp(other.0.iter().rev())
    }

    /// All multi-indices of length `len` and order `q`, colexicographic.
    pub fn of_order(len: usize, q: usize) -> Vec<MultiIndex> {
        let mut out = Vec::new();
        let mut cur = vec![0usize; len];
        fill(&mut cur, 0, q, &mut out);
        out.sort_by(|a, b| a.colex_cmp(b));
        out
    }

    /// All multi-indices of length `len` with order at most `q_max`, by order
    /// then colexicographic.
    pub fn up_to_order(len: usize, q_max: usize) -> Vec<MultiIndex> {
        (0..=q_max).flat_map(|q| Self::of_order(len, q)).collect()
    }

    /// Concatenation `(self, other)`.
    pub fn join(&self, other: &MultiIndex) -> MultiIndex {
        let mut v = self.0.clone();
        v.extend(&other.0);
        MultiIndex(v)
    }

    /// `(first d, rest)`.
    pub fn split(&self, d: usize) -> (MultiIndex, MultiIndex) {
        (MultiIndex(self.0[..d].to_vec()), MultiIndex(self.0[d..].to_vec()))
    }

    /// Leg list: coordinate `i` repeated `n_i` times.
    pub fn legs(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .flat_map(|(i, &n)| std::iter::repeat(i).take(n))
            .collect()
    }

    /// `#I_n = |n|! / n!`, the number of words in `[D]^q` with content `n`.
    pub fn word_count(&self) -> f64 {
        factorial(self.order()) / self.factorial()
    }

    /// `H_n(y) = prod He_{n_i}(y_i)`.
    pub fn hermite_product(&self, y: &[f64]) -> f64 {
        self.0.iter().zip(y).map(|(&n, &x)| hermite(n, x)).product()
    }
}

fn fill(cur: &mut Vec<usize>, pos: usize, rem: usize, out: &mut Vec<MultiIndex>) {
    if pos + 1 == cur.len() {
        cur[pos] = rem;
        out.push(MultiIndex(cur.clone()));
        return;
    }
    if cur.is_empty() {
        if rem == 0 {
            out.push(MultiIndex(Vec::new()));
        }
        return;
    }
    for v in 0..=rem {
        cur[pos] = v;
        fill(cur, pos + 1, rem - v, out);
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: Vec<String> = self.0.iter().map(|n| n.to_string()).collect();
        write!(f, "({})", s.join(","))
    }
}

/// `d(n) = He_n(0) / (n! (2 pi)^(d/2))`, the limit of the Hermite
/// coefficients of the approximate delta at the origin.
pub fn coeff_delta(n: &MultiIndex) -> f64 {
    let d = n.len() as f64;
    let num: f64 = n.0.iter().map(|&k| hermite_at_zero(k)).product();
    num / (n.factorial() * (2.0 * std::f64::consts::PI).powf(d / 2.0))
}

/// Permanent of a square matrix (Ryser's formula).
pub fn permanent(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    if n == 0 {
        return 1.0;
    }
    let mut total = 0.0;
    for mask in 1u32..(1 << n) {
        let mut prod = 1.0;
        for i in 0..n {
            let s: f64 = (0..n).filter(|j| mask & (1 << j) != 0).map(|j| a[(i, j)]).sum();
            prod *= s;
        }
        let sign = if (n - mask.count_ones() as usize) % 2 == 0 { 1.0 } else { -1.0 };
        total += sign * prod;
    }
    total
}

/// `E[H_m(Y(0)) H_n(Y(t))]` for standard `Y(0)`, `Y(t)` with cross
/// covariance `gamma[(i, j)] = E[Y_i(0) Y_j(t)]`, by the diagram formula:
/// the permanent of the leg matrix.
pub fn mehler_cov(m: &MultiIndex, n: &MultiIndex, gamma: &DMatrix<f64>) -> Result<f64> {
    let q = m.order();
    if q != n.order() {
        return Ok(0.0);
    }
    if q > MEHLER_ORDER_LIMIT {
        return Err(Error::OrderTooLarge {
            order: q,
            limit: MEHLER_ORDER_LIMIT,
        });
    }
    let (lm, ln) = (m.legs(), n.legs());
    let legs = DMatrix::from_fn(q, q, |a, b| gamma[(lm[a], ln[b])]);
    Ok(permanent(&legs))
}

/// `E[X1 X2 X3 X4]` for a centred Gaussian vector with covariance `c`.
pub fn wick4(c: &DMatrix<f64>) -> f64 {
    c[(0, 1)] * c[(2, 3)] + c[(0, 2)] * c[(1, 3)] + c[(0, 3)] * c[(1, 2)]
}

/// `E[He_2(X1) X2 X3] = 2 c12 c13` for centred Gaussian `(X1, X2, X3)` with
/// `Var X1 = 1`.
pub fn wick_h2(c: &DMatrix<f64>) -> f64 {
    2.0 * c[(0, 1)] * c[(0, 2)]
}
