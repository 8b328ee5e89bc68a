//! Seed plumbing. Every random draw in the simulator comes from a ChaCha
//! stream keyed by an explicit `u64`, so runs are reproducible across
//! platforms and `rand` minor versions.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent sub-seed for a named purpose (SplitMix64 finaliser).
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Sub-seed identifiers used by the experiment harness.
pub mod streams {
    pub const BITS_X: u64 = 1;
    pub const BITS_Y: u64 = 2;
    pub const NOISE: u64 = 3;
    pub const POL_ROTATION: u64 = 4;
    pub const GUARD: u64 = 5;
    pub const PHASE_NOISE: u64 = 6;
    pub const SCRAMBLER: u64 = 7;
    pub const TX_PHASE_NOISE: u64 = 8;
}
