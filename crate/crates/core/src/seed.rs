//! Seed derivation.
//!
//! Every random draw in the toolkit comes from a ChaCha stream whose seed is
//! derived from a master seed plus a path of integer tags, so independent
//! consumers (batch sampling, crops, mixup, augmentation) never share state.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `seed` and a tag path.
pub fn derive(seed: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(seed), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rng_for(seed: u64, tags: &[u64]) -> Rng {
    rng(derive(seed, tags))
}

/// Stream tags used across modules.
pub mod tag {
    pub const POOL: u64 = 1;
    pub const BANK: u64 = 2;
    pub const INIT: u64 = 3;
    pub const BATCH: u64 = 4;
    pub const CROP: u64 = 5;
    pub const MIXUP: u64 = 6;
    pub const AUGMENT: u64 = 7;
    pub const TRIALS: u64 = 8;
    pub const INTERFERER: u64 = 9;
    pub const EVAL_UTT: u64 = 10;
    pub const EVAL_POOL: u64 = 11;
}
