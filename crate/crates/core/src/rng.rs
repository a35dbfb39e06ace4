//! Counter-based seed splitting and deterministic reductions.
//!
//! Every random stream is a pure function of `(master seed, stream index)`, so
//! results never depend on how work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of substream `stream` of `master`.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    mix(mix(master ^ 0x9e37_79b9_7f4a_7c15).wrapping_add(stream.wrapping_mul(0x9e37_79b9_7f4a_7c15)))
}

/// A ChaCha8 generator positioned on substream `stream` of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Pairwise (cascade) summation; the result depends only on the order of `xs`.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 16 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Fixed batch layout for parallel Monte Carlo: `(start, len)` per batch.
pub(crate) fn batches(n: usize, batch: usize) -> Vec<(usize, usize)> {
    (0..n.div_ceil(batch))
        .map(|b| {
            let start = b * batch;
            (start, batch.min(n - start))
        })
        .collect()
}
