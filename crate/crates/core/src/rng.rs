//! Deterministic random-stream derivation.
//!
//! All randomness in the crate flows through explicit [`ChaCha8Rng`] streams
//! derived from a master seed and a label path. Deriving streams by value
//! rather than by call order makes draws structural: two runs that touch the
//! same (seed, label) pair see the same numbers regardless of what else they
//! computed in between. This is what lets static strategies share channel
//! realizations and lets sweeps reuse draws across axis values.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream labels, kept in one place so substream derivations never collide.
pub mod label {
    pub const EPISODE_INIT: u64 = 1;
    pub const MOBILITY: u64 = 2;
    pub const SIM_CHANNEL: u64 = 3;
    pub const EVE_CHANNEL: u64 = 4;
    pub const POLICY_SAMPLE: u64 = 5;
    pub const PARAM_INIT: u64 = 6;
    pub const BUFFER_SAMPLE: u64 = 7;
    pub const EVALUATION: u64 = 8;
    pub const DIRECT_CHANNEL: u64 = 9;
    pub const RANDOM_SEARCH: u64 = 10;
    pub const VALIDATION: u64 = 11;
}

/// SplitMix64 finalizer; good avalanche for combining label words.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives the 64-bit key for a (seed, label path) pair.
pub fn derive_key(seed: u64, path: &[u64]) -> u64 {
    let mut state = mix(seed ^ 0x5151_5344_4553_4b21);
    for &word in path {
        state = mix(state ^ word);
    }
    state
}

/// Derives an independent ChaCha stream for a (seed, label path) pair.
pub fn substream(seed: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_key(seed, path))
}
