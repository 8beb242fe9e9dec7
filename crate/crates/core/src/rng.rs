//! Seedable, splittable random streams.
//!
//! Every consumer of randomness gets a stream derived from a master seed and
//! a list of tags (solver id, generation, ...), so results do not depend on
//! the order in which independent work is scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type GaRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hashes a master seed and a tag path into a single 64-bit stream key.
pub fn stream_key(seed: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(seed), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

/// Creates the random stream identified by `(seed, tags)`.
pub fn derive_stream(seed: u64, tags: &[u64]) -> GaRng {
    GaRng::seed_from_u64(stream_key(seed, tags))
}

/// Stream tags used across the crate.
pub mod tags {
    pub const STEP: u64 = 0x5354_4550;
    pub const INIT: u64 = 0x494E_4954;
    pub const TRAIN: u64 = 0x5452_4149;
    pub const INSTANCE: u64 = 0x494E_5354;
    pub const PENALTY: u64 = 0x5045_4E41;
    pub const DATASET: u64 = 0x4441_5441;
    pub const SWITCH: u64 = 0x5357_4954;
}
