//! Seed derivation. Every random stream in the crate is a ChaCha8 generator
//! seeded from a mix of the run seed and a purpose-specific path, so any
//! component can be regenerated independently of evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream ids that keep training and evaluation sampling apart.
pub mod stream {
    pub const APARTMENT: u64 = 0x4150_5452;
    pub const INIT: u64 = 0x494e_4954;
    pub const TRAIN: u64 = 0x5452_4149;
    pub const TEST: u64 = 0x5445_5354;
    pub const SHUFFLE: u64 = 0x5348_5546;
    pub const NOISE: u64 = 0x4e4f_4953;
    pub const SPLIT: u64 = 0x5350_4c54;
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Order-sensitive hash of a seed and a path of integers.
pub fn derive(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix(seed), |h, &p| splitmix(h ^ splitmix(p)))
}

pub fn rng_for(seed: u64, path: &[u64]) -> Rng {
    Rng::seed_from_u64(derive(seed, path))
}
