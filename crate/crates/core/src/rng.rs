//! Seed derivation and per-stream generators.
//!
//! Every random stream is a ChaCha8 generator (counter based) keyed by a seed
//! derived from `(master_seed, index, stage_tag)`. The derivation is:
//!
//! ```text
//! h = splitmix64(master_seed ^ fnv1a64(stage_tag))
//! h = splitmix64(h ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15))
//! ```
//!
//! so alternate implementations can regenerate the same seed tree.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn derive_seed(master_seed: u64, index: u64, stage_tag: &str) -> u64 {
    let h = splitmix64(master_seed ^ fnv1a64(stage_tag.as_bytes()));
    splitmix64(h ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

pub fn stream(seed: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn derived_stream(master_seed: u64, index: u64, stage_tag: &str) -> StreamRng {
    stream(derive_seed(master_seed, index, stage_tag))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn derivation_is_stable_and_tag_sensitive() {
        assert_eq!(derive_seed(7, 3, "rep"), derive_seed(7, 3, "rep"));
        assert_ne!(derive_seed(7, 3, "rep"), derive_seed(7, 3, "offline"));
        assert_ne!(derive_seed(7, 3, "rep"), derive_seed(7, 4, "rep"));
        assert_ne!(derive_seed(7, 3, "rep"), derive_seed(8, 3, "rep"));
    }

    #[test]
    fn streams_reproduce() {
        let mut a = derived_stream(1, 2, "x");
        let mut b = derived_stream(1, 2, "x");
        for _ in 0..100 {
            assert_eq!(a.random::<u64>(), b.random::<u64>());
        }
    }
}
