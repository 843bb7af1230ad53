//! Seed derivation.
//!
//! Every random stream in the crate is a ChaCha8 generator seeded from a
//! 64-bit value derived from the run seed with [`derive`]. The derivation is
//! a SplitMix64 finalizer applied to `base`, a stream tag and an index, so
//! streams for different purposes (noise, scene sampling, fold shuffles,
//! parameter init) never overlap in practice.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags. Changing any of these changes every derived artifact.
pub mod tag {
    pub const SCENE: u64 = 0x5343_454e;
    pub const NOISE: u64 = 0x4e4f_4953;
    pub const FOLDS: u64 = 0x464f_4c44;
    pub const INIT: u64 = 0x494e_4954;
    pub const SHUFFLE: u64 = 0x5348_5546;
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive(base: u64, tag: u64, index: u64) -> u64 {
    splitmix(splitmix(splitmix(base) ^ tag) ^ index)
}

pub fn rng(base: u64, tag: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(base, tag, index))
}
