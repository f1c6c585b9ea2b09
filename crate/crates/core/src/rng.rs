//! Counter-based random streams.
//!
//! Every random draw in a run comes from a stream keyed by
//! `(seed, purpose, index)`, so results do not depend on evaluation order or
//! on how work is split across threads.

use rand::SeedableRng;
pub use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Init = 1,
    Noise = 2,
    Prior = 3,
    Shuffle = 4,
    Evaluation = 5,
    Data = 6,
    Split = 7,
    Inspection = 8,
}

/// Independent ChaCha stream for `(seed, purpose, index)`.
pub fn stream(seed: u64, purpose: Purpose, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((purpose as u64) << 56) ^ index);
    rng
}
