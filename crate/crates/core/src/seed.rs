//! Sub-seed derivation. Every random draw in the crate is seeded from the
//! user seed through [`derive`], so runs are reproducible and independent
//! stages do not share streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from a parent seed and a stream tag.
pub fn derive(seed: u64, tag: u64) -> u64 {
    mix(mix(seed) ^ tag.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// Stream tags.
pub const TAG_BRANCH_X: u64 = 0x5801;
pub const TAG_BRANCH_Y: u64 = 0x5902;
pub const TAG_BRANCH_Z: u64 = 0x5A03;
pub const TAG_KMEANS: u64 = 0x4B04;
pub const TAG_JITTER: u64 = 0x4A05;
pub const TAG_INIT: u64 = 0x4906;
