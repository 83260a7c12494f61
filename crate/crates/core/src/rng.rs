//! Seed derivation for independent random streams.
//!
//! Every stochastic stage draws from a stream keyed by `(master seed, stage tag, index)`,
//! so results do not depend on how work is scheduled across threads.

use rand::rngs::SmallRng;
use rand::SeedableRng;

/// Stage tags mixed into derived seeds.
pub mod stage {
    pub const FEATURES: u64 = 0x4645_4154;
    pub const ORACLE_POSTERIOR: u64 = 0x4f52_4143;
    pub const TRAIN: u64 = 0x5452_4149;
    pub const REGRESSION: u64 = 0x5245_4752;
    pub const REFERENCE: u64 = 0x5245_4645;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed; distinct `(stage, index)` pairs give decorrelated streams.
pub fn derive_seed(master: u64, stage: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ stage) ^ index)
}

pub fn rng_from_seed(seed: u64) -> SmallRng {
    SmallRng::seed_from_u64(seed)
}
