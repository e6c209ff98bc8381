//! Per-replica random streams.
//!
//! Every replica owns a ChaCha8 stream keyed by the run seed, with the
//! 64-bit stream id `leg << 40 | replica`. Draws never depend on thread
//! scheduling, so parallel and serial runs see identical numbers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// Replica indices must stay below `2^40`.
pub const MAX_REPLICAS: u64 = 1 << 40;

pub fn stream(seed: u64, leg: u64, replica: u64) -> Stream {
    debug_assert!(replica < MAX_REPLICAS);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((leg << 40) | replica);
    rng
}
