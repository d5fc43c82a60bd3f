//! Deterministic random streams.
//!
//! A run has one seed. Every consumer (initialization, training batches,
//! held-out data, ...) reads its own ChaCha stream of that seed, and
//! per-step draws start at a fixed word offset inside the stream. Any draw
//! can therefore be reproduced from `(seed, consumer, index)` alone, which
//! is what makes checkpoint resume exact.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const INIT: u64 = 1;
pub const TRAIN_BATCH: u64 = 2;
pub const TEST_DATA: u64 = 3;
pub const TRAIN_EVAL_DATA: u64 = 4;
pub const TRAIN_DATA: u64 = 5;
pub const MISC: u64 = 6;

/// Each index gets 2^40 words of its own.
const INDEX_STRIDE_BITS: u32 = 40;

pub fn stream(seed: u64, consumer: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(consumer);
    rng.set_word_pos((index as u128) << INDEX_STRIDE_BITS);
    rng
}
