//! Seed derivation.
//!
//! Every random stream in the crate is a ChaCha8 generator seeded from a
//! 64-bit value derived from the run's master seed. Derived seeds are built by
//! folding coordinates (record index, copy index, update index, ...) into the
//! master seed with the SplitMix64 finalizer:
//!
//! ```text
//! mix(seed, a, b) = splitmix64(splitmix64(seed ^ splitmix64(a)) ^ splitmix64(b ^ GOLDEN))
//! ```
//!
//! Streams are bit-exact within this implementation only.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output function applied to `z + GOLDEN`.
pub fn splitmix64(z: u64) -> u64 {
    let mut z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from `seed` and two coordinates.
pub fn mix_seed(seed: u64, a: u64, b: u64) -> u64 {
    splitmix64(splitmix64(seed ^ splitmix64(a)) ^ splitmix64(b ^ GOLDEN))
}

pub fn stream(seed: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Domain tags keep streams for different purposes apart even when their
/// numeric coordinates coincide.
pub mod domain {
    pub const CORRUPT: u64 = 0x636f_7272;
    pub const BATCH: u64 = 0x6261_7463;
    pub const ROLLOUT: u64 = 0x726f_6c6c;
    pub const BASELINE: u64 = 0x6261_7365;
    pub const THEORY: u64 = 0x7468_656f;
}
