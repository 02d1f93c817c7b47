//! Random number streams.
//!
//! Every stochastic routine draws from ChaCha8 seeded with a user seed and
//! addressed by a 64-bit stream id. ChaCha is counter based, so stream `k`
//! of seed `s` yields the same values on every platform and regardless of
//! the order in which streams are consumed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Independent generator for `(seed, stream)`.
pub fn stream_rng(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Seed for replicate `r` of a run seeded with `seed` (SplitMix64 mixing).
pub fn replicate_seed(seed: u64, r: u64) -> u64 {
    let mut z = seed ^ r.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream ids reserved for particular consumers so that, e.g., the split of
/// replicate 3 never shares a stream with the bootstrap of replicate 3.
pub mod streams {
    pub const SPLIT: u64 = 1 << 40;
    pub const FOLDS: u64 = 2 << 40;
    pub const DRAWS: u64 = 3 << 40;
    pub const TRUTH: u64 = 4 << 40;
    pub const BOOTSTRAP: u64 = 5 << 40;
    pub const DATASET: u64 = 6 << 40;
}
