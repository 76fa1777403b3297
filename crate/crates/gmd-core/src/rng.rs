//! Seeded randomness. Every random draw in the crate flows from a single u64
//! through SplitMix64, so a seed pins a run on a given platform.

use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
pub use rand_xoshiro::SplitMix64;

pub fn seeded(seed: u64) -> SplitMix64 {
    SplitMix64::seed_from_u64(seed)
}

pub fn normal_vec(rng: &mut SplitMix64, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn uniform_vec(rng: &mut SplitMix64, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// A point in the relative interior of the simplex (normalized exponentials
/// of standard normals).
pub fn simplex_point(rng: &mut SplitMix64, n: usize) -> Vec<f64> {
    let e: Vec<f64> = normal_vec(rng, n).into_iter().map(f64::exp).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}
