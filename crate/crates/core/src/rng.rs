//! Keyed counter-based hashing and seeded sequential streams.
//!
//! Every random quantity in the crate is a pure function of a 64-bit seed,
//! a stream tag and one or more counters. Instruction draws never consume
//! sequential state, so any two toppling orders read the same stack.

use rand::SeedableRng;
use rand_pcg::Pcg64Mcg;

/// Stream tags. Distinct tags give statistically independent streams for
/// the same master seed.
pub mod tag {
    pub const STACK: u64 = 0x5354_4143_4b00_0001;
    pub const INITIAL: u64 = 0x494e_4954_0000_0002;
    pub const POLICY: u64 = 0x504f_4c49_4359_0003;
    pub const MASK: u64 = 0x4d41_534b_0000_0004;
    pub const TRIAL: u64 = 0x5452_4941_4c00_0005;
    pub const AUX: u64 = 0x4155_5800_0000_0006;
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
#[inline(always)]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the key for a stream from a master seed and a tag.
#[inline]
pub fn stream_key(seed: u64, tag: u64) -> u64 {
    mix64(mix64(seed ^ GOLDEN).wrapping_add(tag.wrapping_mul(GOLDEN)))
}

/// Hashes a pair of counters under a stream key.
#[inline(always)]
pub fn hash2(key: u64, a: u64, b: u64) -> u64 {
    let h = mix64(key ^ a.wrapping_mul(0xD6E8_FEB8_6659_FD93));
    mix64(h.wrapping_add(GOLDEN) ^ b.wrapping_mul(0xA076_1D64_78BD_642F))
}

/// Maps a hash to a uniform float in [0, 1) with 53 bits of precision.
#[inline(always)]
pub fn unit_f64(h: u64) -> f64 {
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Derives a child seed, e.g. per grid cell and trial.
pub fn derive_seed(master: u64, a: u64, b: u64) -> u64 {
    hash2(stream_key(master, tag::TRIAL), a, b)
}

/// Sequential generator for a tagged stream of `seed`.
pub fn stream(seed: u64, tag: u64) -> Pcg64Mcg {
    Pcg64Mcg::seed_from_u64(stream_key(seed, tag))
}
