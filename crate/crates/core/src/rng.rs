//! Seeded random sub-streams.
//!
//! Every random draw in a run flows from a single `u64` seed. Independent
//! consumers (pool generation, dispatch order, each rollout job, ...) get
//! their own stream, derived by mixing the seed with a purpose tag and a
//! short list of integer coordinates. Derivation uses a fixed SplitMix64
//! finalizer and the streams are ChaCha8, so outputs are stable across
//! platforms and thread schedules.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The random stream type used throughout the crate.
pub type Stream = ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// What a derived stream is used for. The discriminant is part of the key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    Pool = 1,
    Holdout = 2,
    DispatchOrder = 3,
    Rollout = 4,
    JobDuration = 5,
    Proxy = 6,
    Sample = 7,
    Verify = 8,
}

/// Root seed of an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Seed(pub u64);

impl Seed {
    /// Stable 64-bit key for `(seed, purpose, parts...)`.
    pub fn key(self, purpose: Purpose, parts: &[u64]) -> u64 {
        let mut h = mix64(self.0 ^ GOLDEN_GAMMA);
        h = mix64(h.wrapping_add(GOLDEN_GAMMA) ^ purpose as u64);
        for &part in parts {
            h = mix64(h.wrapping_add(GOLDEN_GAMMA) ^ part);
        }
        h
    }

    pub fn stream(self, purpose: Purpose, parts: &[u64]) -> Stream {
        Stream::seed_from_u64(self.key(purpose, parts))
    }
}

/// FNV-1a over the bytes of `s`; used to turn opaque task ids into stream
/// coordinates.
pub fn hash_str(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
