//! Deterministic seed derivation.
//!
//! Every random draw in the crate is driven by a ChaCha stream whose seed is
//! mixed from a base seed, a purpose tag and an index, so that modulations,
//! ground truths and noise can be regenerated independently of each other.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const TAG_MODULATION: u64 = 0x6d6f64;
pub const TAG_TRUTH: u64 = 0x7472757468;
pub const TAG_NOISE: u64 = 0x6e6f697365;
pub const TAG_POWER: u64 = 0x706f776572;
pub const TAG_TRIAL: u64 = 0x747269616c;
pub const TAG_SAMPLE: u64 = 0x73616d706c65;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes `(base, tag, index)` into a subordinate seed.
pub fn derive_seed(base: u64, tag: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(base) ^ tag) ^ index)
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
