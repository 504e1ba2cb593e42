//! Portable seeded randomness.
//!
//! Every generator in the crate draws from a SplitMix64 stream derived from a
//! 64-bit seed and a stream name, so instance generation, agent ordering and
//! Monte Carlo evaluation can be reproduced independently of each other. The
//! sampling helpers below are hand-rolled on top of the raw `u64` output so
//! the produced values do not depend on the sampling algorithms of any
//! particular `rand` release.

use rand_core::{RngCore, SeedableRng};
pub use rand_xoshiro::SplitMix64;

/// Version tag of the stream derivation. Bump when the derivation changes.
pub const STREAM_VERSION: u32 = 1;

fn fnv1a(name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Named sub-stream of a master seed.
pub fn stream(seed: u64, name: &str) -> SplitMix64 {
    SplitMix64::seed_from_u64(seed ^ fnv1a(name))
}

/// Sub-stream indexed by an integer, e.g. one per Monte Carlo episode.
pub fn indexed_stream(seed: u64, name: &str, index: u64) -> SplitMix64 {
    let mut base = stream(seed, name);
    let salt = base.next_u64();
    SplitMix64::seed_from_u64(salt ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

/// Uniform index in `0..n` via multiply-shift. `n` must be positive.
pub fn below(rng: &mut impl RngCore, n: usize) -> usize {
    debug_assert!(n > 0);
    ((u128::from(rng.next_u64()) * n as u128) >> 64) as usize
}

/// Uniform float in `[0, 1)` with 53 bits of precision.
pub fn unit(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// `k` distinct indices from `0..n`, in sampling order (partial Fisher-Yates).
pub fn sample_distinct(rng: &mut impl RngCore, n: usize, k: usize) -> Vec<usize> {
    assert!(k <= n, "cannot sample {k} distinct values from {n}");
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = i + below(rng, n - i);
        pool.swap(i, j);
    }
    pool.truncate(k);
    pool
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..4).map(|_| stream(7, "instance").next_u64()).collect();
        assert!(a.windows(2).all(|w| w[0] == w[1]));
        assert_ne!(stream(7, "instance").next_u64(), stream(7, "eval").next_u64());
        assert_ne!(indexed_stream(7, "eval", 0).next_u64(), indexed_stream(7, "eval", 1).next_u64());
    }

    #[test]
    fn below_stays_in_range() {
        let mut rng = stream(1, "t");
        for n in 1..50 {
            assert!(below(&mut rng, n) < n);
        }
        let u = unit(&mut rng);
        assert!((0.0..1.0).contains(&u));
    }

    #[test]
    fn sample_distinct_has_no_repeats() {
        let mut rng = stream(3, "t");
        let mut s = sample_distinct(&mut rng, 24, 12);
        s.sort_unstable();
        s.dedup();
        assert_eq!(s.len(), 12);
    }
}
