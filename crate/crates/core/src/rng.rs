//! Seed derivation. One 64-bit seed is split into independent streams keyed
//! by a path of counters (video, frame, feature, ...), so sampled values do not
//! depend on the order in which streams are consumed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from `seed` and a counter path.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(seed), |acc, &c| splitmix64(acc ^ splitmix64(c.wrapping_add(0x632B_E59B_D9B4_E019))))
}

/// A ChaCha stream for the given counter path.
pub fn stream(seed: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, path))
}

/// Stream tags so different consumers of one seed never collide.
pub mod tag {
    pub const STATIC_PRIOR: u64 = 1;
    pub const TEMPORAL_PRIOR: u64 = 2;
    pub const MC_KL: u64 = 3;
    pub const REPARAM: u64 = 4;
    pub const INIT: u64 = 5;
    pub const BATCH: u64 = 6;
    pub const SVM: u64 = 7;
    pub const SPLIT: u64 = 8;
    pub const GLYPH: u64 = 9;
    pub const SHAPES: u64 = 10;
    pub const PLOT: u64 = 11;
}
