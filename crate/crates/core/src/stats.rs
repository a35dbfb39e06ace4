//! Sample statistics used by the Monte Carlo harness.

use statrs::function::erf::erfc;

use crate::rng::pairwise_sum;

pub fn mean(xs: &[f64]) -> f64 {
    pairwise_sum(xs) / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    let sq: Vec<f64> = xs.iter().map(|x| (x - m) * (x - m)).collect();
    pairwise_sum(&sq) / (n - 1) as f64
}

/// Standard error of the mean.
pub fn stderr(xs: &[f64]) -> f64 {
    (variance(xs) / xs.len() as f64).sqrt()
}

/// Central moment of order `p`.
fn central_moment(xs: &[f64], p: i32) -> f64 {
    let m = mean(xs);
    let v: Vec<f64> = xs.iter().map(|x| (x - m).powi(p)).collect();
    mean(&v)
}

pub fn skewness(xs: &[f64]) -> f64 {
    let m2 = central_moment(xs, 2);
    central_moment(xs, 3) / m2.powf(1.5)
}

pub fn excess_kurtosis(xs: &[f64]) -> f64 {
    let m2 = central_moment(xs, 2);
    central_moment(xs, 4) / (m2 * m2) - 3.0
}

/// Large-sample standard error of the unbiased sample variance,
/// `sqrt((m4 - s^4 (n-3)/(n-1)) / n)`.
pub fn variance_stderr(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    if xs.len() < 4 {
        return f64::NAN;
    }
    let s2 = variance(xs);
    let m4 = central_moment(xs, 4);
    ((m4 - s2 * s2 * (n - 3.0) / (n - 1.0)).max(0.0) / n).sqrt()
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Standardize to zero mean and unit sample variance.
pub fn standardize(xs: &[f64]) -> Vec<f64> {
    let m = mean(xs);
    let s = variance(xs).sqrt();
    xs.iter().map(|x| (x - m) / s).collect()
}

/// Distance between the empirical distribution of `zs` and the standard normal.
///
/// Evaluated at each distinct sample value against the mid-point of the EDF
/// jump, so lattice-valued samples (counts) are not penalized for their
/// atoms.
pub fn edf_distance(zs: &[f64]) -> f64 {
    let mut sorted = zs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut worst: f64 = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let x = sorted[i];
        let mut j = i;
        while j < sorted.len() && sorted[j] == x {
            j += 1;
        }
        let mid = 0.5 * (i as f64 + j as f64) / n;
        worst = worst.max((mid - normal_cdf(x)).abs());
        i = j;
    }
    worst
}

/// Sample covariance matrix of row vectors.
pub fn covariance_matrix(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let p = rows.first().map_or(0, Vec::len);
    let n = rows.len() as f64;
    let means: Vec<f64> = (0..p)
        .map(|j| pairwise_sum(&rows.iter().map(|r| r[j]).collect::<Vec<_>>()) / n)
        .collect();
    let mut out = vec![vec![0.0; p]; p];
    for a in 0..p {
        for b in a..p {
            let prods: Vec<f64> = rows
                .iter()
                .map(|r| (r[a] - means[a]) * (r[b] - means[b]))
                .collect();
            let c = pairwise_sum(&prods) / (n - 1.0);
            out[a][b] = c;
            out[b][a] = c;
        }
    }
    out
}
