//! Seeded random streams. Every random draw in the crate goes through a
//! `ChaCha8Rng` derived from a master seed and a tag path, so each consumer
//! owns an independent, reproducible stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream tags for the different consumers.
pub mod tag {
    pub const INIT: u64 = 1;
    pub const VIEW1: u64 = 2;
    pub const VIEW2: u64 = 3;
    pub const KMEANS_V: u64 = 4;
    pub const KMEANS_U: u64 = 5;
    pub const SPLIT: u64 = 6;
    pub const LINK_SPLIT: u64 = 7;
    pub const COMMUNITY: u64 = 8;
    pub const PROBE: u64 = 9;
    pub const EPOCH: u64 = 10;
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a tag path into a seed.
pub fn derive(seed: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(splitmix(seed), |acc, &t| splitmix(acc ^ splitmix(t)))
}

pub fn stream(seed: u64, tags: &[u64]) -> Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, tags))
}
