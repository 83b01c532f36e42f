//! Seeded random streams. One master seed fans out into independent named
//! streams so that the draws of one purpose never shift those of another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Init = 1,
    Batching = 2,
    ZNoise = 3,
    WeightNoise = 4,
    Data = 5,
    Split = 6,
    Predict = 7,
    Generate = 8,
}

/// Independent stream `stream` of the master `seed`.
pub fn stream(seed: u64, stream: Stream) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Sub-stream `index` of a named stream, e.g. one per prediction chain.
pub fn substream(seed: u64, stream: Stream, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(((stream as u64) << 32) | (index & 0xFFFF_FFFF));
    rng
}
