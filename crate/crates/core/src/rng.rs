//! Seed derivation and random streams.
//!
//! Every random stream in the crate is a `ChaCha8Rng` seeded from a 64-bit
//! seed. Child seeds are derived with the SplitMix64 finalizer:
//!
//! ```text
//! child(master, i) = mix(mix(master ^ 0x9E3779B97F4A7C15) ^ i)
//! mix(z) = z ^ (z >> 31) after two xor-shift-multiply rounds
//! ```
//!
//! so a child depends only on `(master, i)` and never on the order in which
//! children are requested. Gaussian draws use the ziggurat sampler from
//! `rand_distr::StandardNormal`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive the `index`-th child seed of `master`.
pub fn child(master: u64, index: u64) -> u64 {
    mix(mix(master ^ GOLDEN) ^ index.wrapping_mul(GOLDEN).wrapping_add(index))
}

/// Derive a child seed keyed by a stable string label (FNV-1a of the label).
pub fn child_named(master: u64, label: &str) -> u64 {
    child(master, fnv1a(label.as_bytes()))
}

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

pub fn stream(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Sample `k` distinct indices from `0..n` (partial Fisher-Yates), in draw order.
pub fn sample_indices(rng: &mut Rng, n: usize, k: usize) -> Vec<usize> {
    use rand::Rng as _;
    let k = k.min(n);
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = rng.random_range(i..n);
        pool.swap(i, j);
    }
    pool.truncate(k);
    pool
}

/// `k` uniform draws from `0..n` with replacement.
pub fn sample_indices_with_replacement(rng: &mut Rng, n: usize, k: usize) -> Vec<usize> {
    use rand::Rng as _;
    (0..k).map(|_| rng.random_range(0..n)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn children_are_distinct_and_stable() {
        let a: Vec<u64> = (0..100).map(|i| child(7, i)).collect();
        let b: Vec<u64> = (0..100).rev().map(|i| child(7, i)).collect();
        let mut rev = b.clone();
        rev.reverse();
        assert_eq!(a, rev);
        let mut sorted = a.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 100);
        assert_ne!(child(7, 0), child(8, 0));
        assert_ne!(child_named(1, "dash"), child_named(1, "lsm"));
    }

    #[test]
    fn sample_indices_distinct() {
        let mut r = stream(3);
        let s = sample_indices(&mut r, 10, 10);
        let mut t = s.clone();
        t.sort_unstable();
        assert_eq!(t, (0..10).collect::<Vec<_>>());
        assert_eq!(sample_indices(&mut r, 5, 9).len(), 5);
    }
}
