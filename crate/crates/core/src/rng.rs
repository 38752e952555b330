//! Seed derivation.
//!
//! Everything random in an episode is derived from one root seed. Sequential
//! streams (`ChaCha8Rng`) are used where draws are consumed in a fixed order;
//! per-event draws (blockage coins, shadowing, ACKs, obstacle steps) are
//! counter-based hashes of `(seed, purpose, ...)` so they do not depend on
//! which policy is running or how many other obstacles exist.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Draw purposes; each value selects an independent family of draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    StaticPlacement = 1,
    ObstaclePlacement = 2,
    ObstacleStep = 3,
    Blockage = 4,
    Shadowing = 5,
    Ack = 6,
    Matched = 7,
    OracleParams = 8,
    GlobalBlockage = 9,
}

/// splitmix64 finaliser.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hashes a sequence of words into one 64-bit key.
#[inline]
pub fn key(words: &[u64]) -> u64 {
    words.iter().fold(0x6A09_E667_F3BC_C908, |acc, &w| mix64(acc ^ mix64(w)))
}

/// Seed of run `run` under `root`; independent of policy and sweep point.
pub fn run_seed(root: u64, run: u64) -> u64 {
    key(&[root, run])
}

/// Sequential stream for one purpose of one run.
pub fn substream(seed: u64, purpose: Purpose) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(key(&[seed, purpose as u64]))
}

/// Uniform in `[0, 1)` from a key.
#[inline]
pub fn unit(k: u64) -> f64 {
    (k >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Fair coin from a key.
#[inline]
pub fn coin(k: u64) -> bool {
    k >> 63 == 1
}

/// Standard normal from a key.
pub fn normal(k: u64) -> f64 {
    StandardNormal.sample(&mut ChaCha8Rng::seed_from_u64(k))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keys_differ_by_position() {
        assert_ne!(key(&[1, 2]), key(&[2, 1]));
        assert_ne!(key(&[0]), key(&[0, 0]));
        assert_eq!(key(&[5, 6, 7]), key(&[5, 6, 7]));
    }

    #[test]
    fn unit_and_coin_are_balanced() {
        let n = 100_000u64;
        let mean: f64 = (0..n).map(|i| unit(key(&[9, i]))).sum::<f64>() / n as f64;
        let heads = (0..n).filter(|&i| coin(key(&[10, i]))).count() as f64 / n as f64;
        assert!((mean - 0.5).abs() < 0.01);
        assert!((heads - 0.5).abs() < 0.01);
    }

    #[test]
    fn normal_moments() {
        let n = 50_000u64;
        let xs: Vec<f64> = (0..n).map(|i| normal(key(&[3, i]))).collect();
        let m = xs.iter().sum::<f64>() / n as f64;
        let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64;
        assert!(m.abs() < 0.02);
        assert!((v.sqrt() - 1.0).abs() < 0.02);
    }
}
