//! Seed derivation for reproducible, order-independent random streams.
//!
//! Every consumer of randomness (client sampling, local batch sampling,
//! noise, random-k masks) gets its own ChaCha stream keyed by a tuple of
//! integers mixed into the master seed. Two streams with different keys are
//! statistically independent, and the stream for a given key never depends
//! on the order in which other streams were consumed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used throughout the simulator.
pub type SimRng = ChaCha8Rng;

/// Stream purpose tags, mixed in as the first key component.
pub mod tag {
    pub const INIT: u64 = 0x494e_4954;
    pub const SAMPLE_CLIENTS: u64 = 0x5341_4d50;
    pub const LOCAL_BATCH: u64 = 0x4c4f_4341;
    pub const NOISE: u64 = 0x4e4f_4953;
    pub const SPARSIFY: u64 = 0x5350_5253;
    pub const DATA: u64 = 0x4441_5441;
    pub const SPLIT: u64 = 0x5350_4c54;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hashes `(master, parts...)` into a 64-bit seed.
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(master), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

/// A fresh generator for the stream identified by `(master, parts...)`.
pub fn stream(master: u64, parts: &[u64]) -> SimRng {
    SimRng::seed_from_u64(derive_seed(master, parts))
}
