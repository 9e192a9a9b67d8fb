//! Deterministic seed derivation.
//!
//! Every random stream in the crate is a ChaCha8 generator (counter based,
//! 64-bit seeded) whose seed is `base` mixed with a tuple of tags such as
//! `(s, a)` or `(replicate, draw)`. Streams therefore depend only on the tags,
//! never on the order in which parallel workers happen to run.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `base ⊕ hash(tags)`, hashing the tags position by position.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    let h = tags.iter().fold(0x6A09_E667_F3BC_C909_u64, |acc, &t| mix(acc ^ mix(t)));
    base ^ h
}

pub fn rng(base: u64, tags: &[u64]) -> Rng {
    Rng::seed_from_u64(derive_seed(base, tags))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: u64 = rng(7, &[1, 2]).random();
        let b: u64 = rng(7, &[1, 2]).random();
        let c: u64 = rng(7, &[2, 1]).random();
        let d: u64 = rng(8, &[1, 2]).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }
}
