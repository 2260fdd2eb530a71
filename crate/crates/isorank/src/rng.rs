//! Deterministic seed threading.
//!
//! Every randomized routine takes an explicit seed and derives its own stream
//! from (root seed, context tags) so that replicates, grid points and internal
//! stages never share or reorder random draws. ChaCha8 is used throughout: it
//! is a counter-based generator with identical output on every platform.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 step; the standard finalizer used to decorrelate seed inputs.
pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a root seed and a list of context tags.
///
/// Different tag lists give statistically independent child seeds; the same
/// inputs always give the same output.
pub fn derive_seed(root: u64, tags: &[u64]) -> u64 {
    let mut acc = splitmix64(root);
    for &t in tags {
        acc = splitmix64(acc ^ splitmix64(t));
    }
    acc
}

/// A ChaCha8 generator seeded from (root, tags).
pub fn rng_from(root: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, tags))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn derive_seed_is_stable_and_tag_sensitive() {
        let a = derive_seed(42, &[1, 2]);
        let b = derive_seed(42, &[1, 2]);
        let c = derive_seed(42, &[2, 1]);
        let d = derive_seed(43, &[1, 2]);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }

    #[test]
    fn rng_streams_reproduce() {
        let mut r1 = rng_from(9, &[3]);
        let mut r2 = rng_from(9, &[3]);
        let x1: [u64; 4] = std::array::from_fn(|_| r1.random());
        let x2: [u64; 4] = std::array::from_fn(|_| r2.random());
        assert_eq!(x1, x2);
    }
}
