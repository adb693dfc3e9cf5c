//! Seed plumbing. Every random draw in the crate comes from a ChaCha8
//! stream whose seed is derived from a base seed plus stream labels, so
//! work can be split or reordered without changing the numbers drawn.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `labels` into `base`, yielding an independent-looking seed.
pub fn derive_seed(base: u64, labels: &[u64]) -> u64 {
    labels
        .iter()
        .fold(splitmix64(base), |acc, &l| splitmix64(acc ^ splitmix64(l)))
}

pub fn rng_from(base: u64, labels: &[u64]) -> Rng {
    Rng::seed_from_u64(derive_seed(base, labels))
}

pub fn standard_normal(rng: &mut Rng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn fill_normal(rng: &mut Rng, std: f64, out: &mut [f64]) {
    for v in out {
        *v = std * standard_normal(rng);
    }
}

/// Stream labels, kept in one place so independent components never share a stream.
pub mod stream {
    pub const INIT: u64 = 1;
    pub const RESET: u64 = 2;
    pub const ENV_NOISE: u64 = 3;
    pub const BEHAVIOR: u64 = 4;
    pub const SHUFFLE: u64 = 5;
    pub const SPLIT: u64 = 6;
    pub const BATCH: u64 = 7;
    pub const REPARAM: u64 = 8;
    pub const ROLLOUT: u64 = 9;
    pub const SENSITIVITY: u64 = 10;
    pub const DENSITY: u64 = 11;
    pub const EXPLORATION: u64 = 12;
    pub const EVAL: u64 = 13;
    pub const PRETRAIN: u64 = 14;
    pub const TRAIN: u64 = 15;
    pub const THRESHOLDS: u64 = 16;
}
