//! Seed derivation and named random substreams.
//!
//! Every node owns one independent stream per purpose, derived from the
//! master seed, so the draws a node sees do not depend on how many draws
//! other nodes made or in which order nodes were visited.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Increment of the splitmix64 generator (the 64-bit golden ratio).
pub const SPLITMIX_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// One splitmix64 output step applied to `x`.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(SPLITMIX_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of Monte-Carlo replicate `replicate` under `master`.
///
/// `seed_r = splitmix64(master ^ splitmix64(r))`; replicate seeds are
/// therefore stable when more replicates are added.
pub fn replicate_seed(master: u64, replicate: u64) -> u64 {
    splitmix64(master ^ splitmix64(replicate))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    Placement = 1,
    Motion = 2,
    Odometry = 3,
    Ranging = 4,
    Estimate = 5,
    Drop = 6,
}

pub fn substream_seed(master: u64, node: usize, purpose: Purpose) -> u64 {
    let tag = ((node as u64) << 8) | purpose as u64;
    splitmix64(splitmix64(master) ^ splitmix64(tag.wrapping_mul(SPLITMIX_GAMMA)))
}

pub fn substream(master: u64, node: usize, purpose: Purpose) -> StreamRng {
    StreamRng::seed_from_u64(substream_seed(master, node, purpose))
}
