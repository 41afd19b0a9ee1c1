//! The one pseudo-random generator used for everything seeded in this crate.
//!
//! SplitMix64 (Steele, Lea & Flood): state starts at the seed, each draw adds
//! `0x9e3779b97f4a7c15` and returns the finalized state. Any implementation
//! of that recurrence reproduces pools and fixtures bit-for-bit.

pub use rand_xoshiro::SplitMix64;

use rand::SeedableRng;

pub fn seeded(seed: u64) -> SplitMix64 {
    SplitMix64::seed_from_u64(seed)
}

/// Derives an independent stream from `seed` for a named purpose.
pub fn split(seed: u64, stream: u64) -> SplitMix64 {
    use rand::RngCore;
    let mut base = seeded(seed ^ stream.wrapping_mul(0xd1b5_4a32_d192_ed03));
    seeded(base.next_u64())
}
