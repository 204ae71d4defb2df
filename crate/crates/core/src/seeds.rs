//! Deterministic seed derivation.
//!
//! Every random draw in the crate flows from a `ChaCha8` stream whose seed is
//! mixed from a base seed plus a context path (names, indices). Mixing is
//! stable across platforms so that identical inputs always reproduce
//! identical frames, weights and reports.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer; good avalanche behaviour for seed mixing.
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// FNV-1a over a string, used to fold names into seed material.
fn hash_str(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Accumulates context components into a derived seed.
#[derive(Debug, Clone, Copy)]
pub struct SeedPath(u64);

impl SeedPath {
    pub fn new(base: u64) -> Self {
        SeedPath(splitmix(base))
    }

    pub fn with(self, n: u64) -> Self {
        SeedPath(splitmix(self.0 ^ n.wrapping_mul(0x9e37_79b9_7f4a_7c15)))
    }

    pub fn with_str(self, s: &str) -> Self {
        SeedPath(splitmix(self.0 ^ hash_str(s)))
    }

    pub fn seed(self) -> u64 {
        self.0
    }

    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}

/// Shorthand for a one-shot derived seed.
pub fn derive(base: u64, tag: &str, n: u64) -> u64 {
    SeedPath::new(base).with_str(tag).with(n).seed()
}
