//! Seed derivation for replica and channel RNG streams.
//!
//! Streams are split with SplitMix64: `derive(master, index)` feeds
//! `master XOR (index+1)*GAMMA` through one SplitMix64 round. Identical
//! (master, index) pairs always yield identical streams, and distinct
//! indices give statistically independent ChaCha states.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(GAMMA);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive the seed for stream `index` from a master seed.
pub fn derive(master: u64, index: u64) -> u64 {
    splitmix64(master ^ index.wrapping_add(1).wrapping_mul(GAMMA))
}

/// RNG for a derived stream.
pub fn stream_rng(master: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(master, index))
}
