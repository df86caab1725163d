//! Seed derivation.
//!
//! Every random operation draws from a ChaCha20 stream keyed by the run's
//! root seed. The 64-bit ChaCha stream id selects the operation and the word
//! position inside the stream is the counter, so two operations sharing a
//! root seed never overlap and the result of one operation does not depend
//! on how many numbers another operation consumed before it.
//!
//! Stream ids are `(tag << 32) | index`, where `tag` names the operation and
//! `index` distinguishes repeated calls (class index, epoch, trial, ...).

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// Operation tags. Values are part of the reproducibility contract.
pub mod tag {
    pub const SUBSAMPLE: u32 = 1;
    pub const LABEL_NOISE: u32 = 2;
    pub const GAUSSIAN_DRAW: u32 = 3;
    pub const POPULATION_NOISE: u32 = 4;
    pub const KMEANS_INIT: u32 = 5;
    pub const MODEL_INIT: u32 = 6;
    pub const EPOCH_SHUFFLE: u32 = 7;
    pub const PEER_PAIRING: u32 = 8;
    pub const MC_DRAW: u32 = 9;
    pub const MC_FLIP: u32 = 10;
    pub const ESTIMATOR_DRAW: u32 = 11;
    pub const FEATURE_DRAW: u32 = 12;
}

/// Returns the generator for `(seed, tag, index)`.
pub fn stream(seed: u64, tag: u32, index: u32) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(((tag as u64) << 32) | index as u64);
    rng
}

/// Derives a child root seed, for handing a whole sub-pipeline its own seed.
pub fn child_seed(seed: u64, tag: u32, index: u32) -> u64 {
    // splitmix64 finalizer over the packed stream id
    let mut z = seed ^ (((tag as u64) << 32) | index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
