//! Seed derivation. Every stochastic operation takes a `u64` seed; callers
//! derive independent sub-seeds from a base seed and a path of integers so that
//! trials can run in any order and still produce identical draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags used when deriving sub-seeds.
pub mod stream {
    pub const CHANNEL: u64 = 1;
    pub const PREAMBLE_NOISE: u64 = 2;
    pub const UL_NOISE: u64 = 3;
    pub const DL_NOISE: u64 = 4;
    pub const DL_GAINS: u64 = 5;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a sub-seed from `base` and a path of integers.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(base), |acc, &p| splitmix64(acc ^ splitmix64(p.wrapping_add(0x5851_F42D))))
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
