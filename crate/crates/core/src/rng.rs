//! Seed plumbing. Every random draw in the crate comes from a `ChaCha8Rng`
//! built from an explicit 64-bit seed, optionally split by a stream index.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent seed for stream `index` of `seed`.
pub fn derive(seed: u64, index: u64) -> u64 {
    mix64(mix64(seed) ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Generator for stream `index` under `seed`; `(seed, index)` fully determines it.
pub fn stream(seed: u64, index: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, index))
}

/// Named sub-streams so unrelated consumers of one seed never share draws.
pub mod domain {
    pub const SYNTH: u64 = 0x5359_4E54;
    pub const SPLIT_CLASSES: u64 = 0x434C_4153;
    pub const SPLIT_SPEAKERS: u64 = 0x5350_4B52;
    pub const ENCODER_INIT: u64 = 0x454E_4344;
    pub const WORKER_INIT: u64 = 0x574B_5253;
    pub const TRAIN_EPISODES: u64 = 0x5452_4E45;
    pub const VAL_EPISODES: u64 = 0x5641_4C45;
    pub const BENCH: u64 = 0x4245_4E43;
}
