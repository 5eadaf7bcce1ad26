//! Named random sub-streams derived from one 64-bit seed.
//!
//! Every consumer draws from its own ChaCha stream, so serial and parallel
//! runs see identical draws regardless of scheduling, and two scenarios never
//! share a stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stream {
    QuarticBench,
    SyntheticCycle,
    /// demand noise of scenario `j` drawn at supervisory step `step`
    DemandNoise { step: usize, j: usize },
    /// engine-speed noise of scenario `j` at supervisory step `step`
    SpeedNoise { step: usize, j: usize },
    /// stop-time shifts of scenario `j` at supervisory step `step`
    StopShift { step: usize, j: usize },
    /// held-out realization for closed-loop runs
    Realization,
}

const FIELD_BITS: u32 = 28;
const FIELD_MASK: u64 = (1 << FIELD_BITS) - 1;

impl Stream {
    /// Stream id: kind in the top byte, then step and scenario in 28 bits each.
    pub fn id(&self) -> u64 {
        let pack = |kind: u64, step: usize, j: usize| -> u64 {
            assert!((step as u64) <= FIELD_MASK && (j as u64) <= FIELD_MASK, "stream index overflow");
            (kind << 56) | ((step as u64) << FIELD_BITS) | j as u64
        };
        match *self {
            Stream::QuarticBench => pack(1, 0, 0),
            Stream::SyntheticCycle => pack(2, 0, 0),
            Stream::DemandNoise { step, j } => pack(3, step, j),
            Stream::SpeedNoise { step, j } => pack(4, step, j),
            Stream::StopShift { step, j } => pack(5, step, j),
            Stream::Realization => pack(6, 0, 0),
        }
    }
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream.id());
    rng
}
