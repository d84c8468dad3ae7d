//! Deterministic random streams.
//!
//! Every random draw in the crate comes from a stream keyed by
//! `(seed, domain, key, index)`. Work items never share a generator, so
//! sampling in parallel gives the same bytes as sampling sequentially.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A family of independent random streams under one seed and domain tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Streams {
    base: u64,
}

impl Streams {
    pub fn new(seed: u64, domain: &str) -> Self {
        Self {
            base: splitmix(seed ^ splitmix(fnv1a(domain.as_bytes()))),
        }
    }

    /// Narrows the stream family, e.g. to one training iteration.
    pub fn child(&self, index: u64) -> Self {
        Self {
            base: splitmix(self.base ^ splitmix(index.wrapping_add(0x5bd1_e995))),
        }
    }

    /// Generator for work item `index` of `key` (usually a task id).
    pub fn rng(&self, key: &str, index: u64) -> StreamRng {
        let k = splitmix(self.base ^ fnv1a(key.as_bytes()));
        ChaCha8Rng::seed_from_u64(splitmix(k ^ splitmix(index)))
    }
}
