//! Deterministic RNG streams derived from a single run seed.
//!
//! Every consumer of randomness owns a stream keyed by (seed, stage,
//! index), so results never depend on thread count or on the order in
//! which independent work items run.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// A derivable seed stream. `new` keys a stage by name, `with` descends
/// into a sub-stream (e.g. a cycle index), and `rng` yields the generator
/// for one work item.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SeedStream {
    state: u64,
}

impl SeedStream {
    pub fn new(seed: u64, stage: &str) -> Self {
        Self {
            state: splitmix64(seed ^ fnv1a(stage.as_bytes())),
        }
    }

    #[must_use]
    pub fn with(self, key: u64) -> Self {
        Self {
            state: splitmix64(self.state.wrapping_add(1) ^ key),
        }
    }

    pub fn rng(self, index: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(splitmix64(self.state ^ index.wrapping_mul(0x9e3779b97f4a7c15)))
    }
}
