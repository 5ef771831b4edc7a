//! Deterministic random streams.
//!
//! Every stream is a ChaCha8 generator keyed by `mix64(master ^ mix64(index))`
//! with the ChaCha stream id set to a domain tag, so environments, Monte Carlo
//! batches and scenario blocks never share a keystream even when they share a
//! master seed and an index.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type RandomStream = ChaCha8Rng;

/// Purpose tag for a derived stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Environment = 1,
    MonteCarlo = 2,
    Sampler = 3,
}

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for replica `index` under `master`.
#[inline]
pub fn split_seed(master: u64, index: u64) -> u64 {
    mix64(master ^ mix64(index))
}

pub fn stream(master: u64, domain: Domain, index: u64) -> RandomStream {
    let mut rng = ChaCha8Rng::seed_from_u64(split_seed(master, index));
    rng.set_stream(domain as u64);
    rng
}
