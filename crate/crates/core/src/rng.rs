//! Seed splitting.
//!
//! Every command takes a single `u64` seed. Components draw from named streams
//! of a ChaCha8 generator keyed by that seed: the stream id is the fixed
//! discriminant of [`Stream`], so adding a new stream never shifts the values
//! an existing one produces.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Data = 1,
    Init = 2,
    Shuffle = 3,
    Eval = 4,
    Forest = 5,
    TestSet = 6,
    Perturbation = 7,
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream as u64);
    r
}

/// Seed for the `index`-th consumer of `stream`.
pub fn derive_seed(seed: u64, stream: Stream, index: u64) -> u64 {
    let mut r = stream_rng(seed, stream);
    r.set_word_pos(u128::from(index) * 2);
    r.next_u64()
}
