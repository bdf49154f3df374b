//! Monte Carlo plumbing: per-path random streams, order-preserving parallel
//! fan-out and deterministic reductions.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

/// Mean and standard error of an i.i.d. sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MonteCarloEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
    pub seed: u64,
}

impl MonteCarloEstimate {
    /// An exact value (zero error).
    pub fn exact(value: f64) -> Self {
        MonteCarloEstimate {
            mean: value,
            stderr: 0.0,
            n: 0,
            seed: 0,
        }
    }

    pub fn from_samples(samples: &[f64], seed: u64) -> Self {
        let n = samples.len();
        let mean = pairwise_sum(samples) / n as f64;
        let dev: Vec<f64> = samples.iter().map(|s| (s - mean) * (s - mean)).collect();
        let var = if n > 1 { pairwise_sum(&dev) / (n - 1) as f64 } else { 0.0 };
        MonteCarloEstimate {
            mean,
            stderr: (var / n as f64).sqrt(),
            n,
            seed,
        }
    }

    /// Within `k` standard errors plus `slack` of `target`.
    pub fn agrees_with(&self, target: f64, k: f64, slack: f64) -> bool {
        (self.mean - target).abs() <= k * self.stderr + slack
    }
}

/// Recursive pairwise summation over a fixed tree, independent of how the
/// samples were produced.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Stream `index` of the generator keyed by `master_seed`.
pub fn path_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// `d` independent standard normals in the leading slots.
#[inline]
pub fn gaussian3(rng: &mut ChaCha8Rng, d: usize) -> [f64; 3] {
    let mut out = [0.0; 3];
    for slot in out.iter_mut().take(d) {
        *slot = StandardNormal.sample(rng);
    }
    out
}

/// Evaluates `f(i)` for `i in 0..n` on the current rayon pool, returning
/// results in index order.
pub fn par_paths<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    (0..n as u64).into_par_iter().map(f).collect()
}

/// Column `k` of a sample of fixed-size records.
pub fn column<const K: usize>(rows: &[[f64; K]], k: usize) -> Vec<f64> {
    rows.iter().map(|r| r[k]).collect()
}

/// Standard error of `mean(a) - mean(b)` for paired samples.
pub fn paired_difference(a: &[f64], b: &[f64], seed: u64) -> MonteCarloEstimate {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    MonteCarloEstimate::from_samples(&diff, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn estimate_of_constant_has_zero_error() {
        let e = MonteCarloEstimate::from_samples(&[2.0; 1000], 7);
        assert_eq!(e.mean, 2.0);
        assert_eq!(e.stderr, 0.0);
        assert_eq!(e.n, 1000);
    }

    #[test]
    fn pairwise_sum_is_accurate() {
        let xs: Vec<f64> = (0..100_000).map(|i| 0.1 + (i % 7) as f64 * 1e-9).collect();
        let naive: f64 = xs.iter().sum();
        let exact = 100_000.0 * 0.1 + (0..100_000).map(|i| (i % 7) as f64).sum::<f64>() * 1e-9;
        assert!((pairwise_sum(&xs) - exact).abs() <= (naive - exact).abs());
    }

    #[test]
    fn streams_are_independent_and_reproducible() {
        let a: u64 = path_rng(1, 0).random();
        let b: u64 = path_rng(1, 1).random();
        let c: u64 = path_rng(1, 0).random();
        assert_ne!(a, b);
        assert_eq!(a, c);
    }

    #[test]
    fn par_paths_preserves_order() {
        let out = par_paths(1000, |i| i * 2);
        assert!(out.iter().enumerate().all(|(i, v)| *v == 2 * i as u64));
    }
}
