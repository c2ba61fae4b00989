//! Deterministic seed derivation.
//!
//! Every stochastic component takes a single `u64` seed and derives
//! independent streams from it with [`derive`]. Replication `r` of a study
//! always runs on `derive(master_seed, r)`, tree `k` of a bagged ensemble on
//! `derive(ensemble_seed, k)`, and so on. Because the derivation is a pure
//! function, results do not depend on scheduling or worker count.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer. Bijective on `u64`, good avalanche behavior.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive the seed for an independent stream from a master seed.
///
/// Distinct `stream` values yield decorrelated seeds; the same pair always
/// yields the same seed.
pub fn derive(master: u64, stream: u64) -> u64 {
    mix(master.wrapping_add(stream.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15)))
}

/// A seeded RNG for one derived stream.
pub fn rng_for(master: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(master, stream))
}
