//! Deterministic seed derivation.
//!
//! Every source of randomness in the crate is a `StdRng` seeded from a
//! `u64` obtained by mixing a base seed with stream indices. Distinct
//! indices give statistically independent streams, and the derivation is
//! pure, so whole experiments are reproducible bit-for-bit from one seed.

use rand::rngs::StdRng;
use rand::SeedableRng;

/// SplitMix64 finalizer.
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from a base seed and a stream index.
pub fn mix(seed: u64, index: u64) -> u64 {
    splitmix(splitmix(seed) ^ splitmix(index.wrapping_add(0x51ed_270b)))
}

/// Derive a child seed from a base seed and two stream indices.
pub fn mix2(seed: u64, a: u64, b: u64) -> u64 {
    mix(mix(seed, a), b)
}

/// Derive a child seed from a base seed and three stream indices.
pub fn mix3(seed: u64, a: u64, b: u64, c: u64) -> u64 {
    mix(mix2(seed, a, b), c)
}

/// Build a deterministic RNG for the given seed.
pub fn rng_from(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}
