//! Seed derivation. Every random stream in the crate comes from a ChaCha8
//! generator keyed by the master seed, with the stream id selecting an
//! independent counter-based substream. A trial's draws therefore depend
//! only on `(seed, stream)`, never on execution order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Packs up to four small labels into one stream id (16 bits each).
pub fn stream_id(labels: [u64; 4]) -> u64 {
    labels
        .iter()
        .fold(0u64, |acc, &l| (acc << 16) | (l & 0xffff))
}
