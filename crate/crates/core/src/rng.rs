//! Counter-based random streams.
//!
//! Every random draw in a campaign comes from a stream keyed by
//! `(seed, step, purpose, index)`. Batches can therefore be evaluated in any
//! order, or in parallel, without changing results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// What a stream is used for. Distinct purposes never share draws.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    FlowInit = 1,
    PriorSample = 2,
    Setting = 3,
    Noise = 4,
    Measurement = 5,
    Selection = 6,
    EigPrior = 7,
    EigNoise = 8,
    Evaluation = 9,
    Summary = 10,
    InfoGain = 11,
    Predictive = 12,
    Replay = 13,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A family of streams sharing `(seed, step, purpose)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StreamKey {
    key: u64,
}

impl StreamKey {
    pub fn new(seed: u64, step: u64, purpose: Purpose) -> Self {
        let mut k = splitmix64(seed);
        k = splitmix64(k ^ step);
        k = splitmix64(k ^ purpose as u64);
        StreamKey { key: k }
    }

    /// Derives a sub-family, e.g. one per training iteration.
    pub fn child(self, index: u64) -> Self {
        StreamKey {
            key: splitmix64(self.key ^ splitmix64(index.wrapping_add(0x5851_F42D_4C95_7F2D))),
        }
    }

    /// The stream for item `index`.
    pub fn rng(self, index: u64) -> StreamRng {
        ChaCha8Rng::seed_from_u64(splitmix64(self.key.wrapping_add(index)) ^ self.key)
    }
}
