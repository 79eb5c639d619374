//! Seeded random streams.
//!
//! Every simulation draws from ChaCha20 keyed by the user seed, with a fixed
//! stream index per consumer. The chain path and the observation noise never
//! share a stream, so either can be regenerated in isolation.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// Stream used for the hidden chain (initial state, holding times, jumps).
pub const CHAIN_STREAM: u64 = 0;
/// Stream used for the base-grid Brownian increments of the observation noise.
pub const NOISE_STREAM: u64 = 1;
/// Brownian-bridge refinement level `l` (1-based) uses stream `BRIDGE_STREAM_BASE + l`.
pub const BRIDGE_STREAM_BASE: u64 = 16;

pub fn stream(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
