//! Seeded, splittable random streams.
//!
//! Every stochastic routine takes its generator explicitly. Independent
//! streams are derived from one `u64` seed by selecting a ChaCha stream
//! number, so work split into numbered blocks reproduces exactly no matter
//! how the blocks are scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator used by the channel sampler and the packet simulator.
pub type SimRng = ChaCha8Rng;

/// Generator for stream `stream` of the family rooted at `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
