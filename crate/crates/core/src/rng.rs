//! Seed derivation for reproducible, worker-count independent streams.
//!
//! Every random stream in the crate is a `ChaCha8Rng` seeded from
//! [`derive_seed`], which folds a master seed with a path of stream
//! identifiers through the SplitMix64 finalizer. Two different paths give
//! statistically independent streams; the same path always gives the same
//! stream, no matter which thread asks for it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags used by the crate so that independent consumers of a master
/// seed never collide.
pub mod tag {
    pub const SPHERE_NODES: u64 = 0x5350_4845;
    pub const TARGET: u64 = 0x5441_5247;
    pub const COVARIATES: u64 = 0x434f_5641;
    pub const NOISE: u64 = 0x4e4f_4953;
    pub const TEST: u64 = 0x5445_5354;
    pub const MC_BLOCK: u64 = 0x4d43_424b;
    pub const ILLPOSED: u64 = 0x494c_4c50;
    pub const CHECK: u64 = 0x4348_4543;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes `seed` with each element of `path` in order.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(seed), |acc, &p| {
        splitmix64(acc.rotate_left(23) ^ splitmix64(p))
    })
}

/// A ChaCha8 stream for `(seed, path)`.
pub fn stream(seed: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, path))
}
