//! Seed plumbing. Every random stream in the crate is a ChaCha8 generator
//! whose seed is derived from a user seed and a stream tag.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent sub-seed for stream `(tag, index)` of `seed`.
pub fn derive_seed(seed: u64, tag: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(seed) ^ tag.wrapping_mul(0xA24B_AED4_963E_E407)) ^ index)
}

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn stream(seed: u64, tag: u64, index: u64) -> Rng {
    rng_from_seed(derive_seed(seed, tag, index))
}

// Stream tags.
pub const TAG_INIT: u64 = 1;
pub const TAG_SHUFFLE: u64 = 2;
pub const TAG_FOLDS: u64 = 3;
pub const TAG_MEMBER: u64 = 4;
pub const TAG_DATA: u64 = 5;
pub const TAG_ACQUIRE: u64 = 6;
pub const TAG_MC: u64 = 7;
pub const TAG_ORACLE: u64 = 8;
pub const TAG_FLIP: u64 = 9;
