//! Seed derivation.
//!
//! Every random draw in the crate flows from a configured `u64` seed through
//! [`derive`], which mixes the seed with a purpose tag via splitmix64. Derived
//! streams are stateless — task index, epoch, and sample index select a
//! substream instead of advancing shared RNG state — so results do not depend
//! on evaluation order or worker count.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose tags for the seed streams used across the crate.
pub mod tags {
    pub const ARCH_INIT: u64 = 0x11;
    pub const TRAIN_DATA: u64 = 0x21;
    pub const TEST_DATA: u64 = 0x22;
    pub const PERMUTATION: u64 = 0x23;
    pub const SHUFFLE: u64 = 0x31;
    pub const FISHER: u64 = 0x32;
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// Mix a base seed with a purpose tag and an index into a new seed.
pub fn derive(seed: u64, tag: u64, index: u64) -> u64 {
    splitmix64(splitmix64(seed ^ splitmix64(tag)) ^ splitmix64(index))
}

/// Seeded ChaCha generator; the block-cipher construction is stable across
/// platforms and crate versions.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// One independent substream of a seeded generator.
pub fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}
