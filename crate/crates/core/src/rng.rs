//! Seeded randomness shared by every stochastic step (splits, weight init,
//! epoch shuffles).
//!
//! All draws come from SplitMix64 (Steele, Lea & Flood 2014) seeded with the
//! little-endian bytes of a `u64`. The derived operations are spelled out so
//! that another implementation can reproduce them bit-for-bit:
//!
//! * `uniform01`: `(next_u64() >> 11) as f64 * 2^-53`, i.e. the top 53 bits.
//! * `shuffle`: Fisher–Yates from the back, `j = next_u64() % (i + 1)` for
//!   `i = n-1 .. 1`. The modulo bias is below 2^-40 for any realistic `n`.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;

/// Offset mixed into the training seed for the epoch-shuffle stream so it is
/// independent of the weight-initialisation stream.
pub const SHUFFLE_STREAM: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone)]
pub struct SeededRng(SplitMix64);

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng(SplitMix64::seed_from_u64(seed))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    pub fn uniform01(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw in `[-bound, bound)`.
    pub fn symmetric(&mut self, bound: f64) -> f64 {
        (2.0 * self.uniform01() - 1.0) * bound
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = (self.next_u64() % (i as u64 + 1)) as usize;
            items.swap(i, j);
        }
    }
}
