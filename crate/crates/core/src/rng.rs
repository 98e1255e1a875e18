//! Seed splitting.
//!
//! Every random stream is a ChaCha8 generator keyed by the 64-bit run seed
//! with a distinct stream id: replicate `k` of a command uses stream
//! `STREAM_STRIDE * (k + 1) + j` for its `j`-th chain, and the last stream of
//! that block, `j = STREAM_STRIDE - 1`, for anything generated per replicate.
//! Generators that are not tied to a replicate use [`GENERATOR_STREAM`].
//! Bitwise trajectories are a property of this implementation only.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type ChainRng = ChaCha8Rng;

pub const STREAM_STRIDE: u64 = 1 << 16;

/// Stream used by scenario and data generators, disjoint from chain streams.
pub const GENERATOR_STREAM: u64 = STREAM_STRIDE - 1;

pub fn stream_rng(seed: u64, stream: u64) -> ChainRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream id of chain `chain` within replicate `replicate`.
pub fn replicate_stream(replicate: u64, chain: u64) -> u64 {
    STREAM_STRIDE * (replicate + 1) + chain
}

/// Stream for the problem instance or data set generated for `replicate`.
pub fn generator_stream(replicate: u64) -> u64 {
    replicate_stream(replicate, STREAM_STRIDE - 1)
}
