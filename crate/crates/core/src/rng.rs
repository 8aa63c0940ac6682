//! Seeded random streams.
//!
//! Everything random in this crate is driven by [`ChaCha8Rng`]. A Monte Carlo
//! run with seed `s` owns three independent substreams of the ChaCha key
//! derived from `s`: one for process noise (including the initial state), one
//! for measurement noise and one for the attack variables.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Substream identifiers used by the simulation harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Substream {
    Process = 0,
    Measurement = 1,
    Attack = 2,
}

pub fn seeded(seed: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream `stream` of the key derived from `seed`.
pub fn substream(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Process, measurement and attack streams for one run.
pub fn run_streams(seed: u64) -> (StreamRng, StreamRng, StreamRng) {
    (
        substream(seed, Substream::Process as u64),
        substream(seed, Substream::Measurement as u64),
        substream(seed, Substream::Attack as u64),
    )
}
