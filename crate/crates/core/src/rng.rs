//! Seed derivation.
//!
//! Every random draw in the crate comes from a [`ChaCha8Rng`] built from a
//! 64-bit seed. Independent sub-streams (per signal column, per grid cell,
//! per retry) are obtained by mixing a parent seed with a stream index, so a
//! run is reproducible from `(seed, config)` alone and independent of the
//! order in which streams are consumed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator used throughout the crate.
pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive the seed of child stream `index` of `seed`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ splitmix64(index.wrapping_add(0x5851_f42d_4c95_7f2d)))
}

/// Generator for `seed`.
pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Generator for child stream `index` of `seed`.
pub fn child_rng(seed: u64, index: u64) -> Rng {
    rng_from_seed(derive_seed(seed, index))
}
