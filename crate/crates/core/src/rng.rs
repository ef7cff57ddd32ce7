//! Portable random draws.
//!
//! Every random decision in the crate comes from a [`DrawStream`]: the
//! xoshiro256++ generator, seeded from a `u64` by SplitMix64 expansion (the
//! reference seeding of the xoshiro authors, as implemented by
//! `rand_xoshiro`). Unit-interval draws take the top 53 bits of a 64-bit
//! output, `(x >> 11) · 2⁻⁵³`, so sequences are identical on every platform.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

#[derive(Debug, Clone)]
pub struct DrawStream {
    inner: Xoshiro256PlusPlus,
}

impl DrawStream {
    pub fn new(seed: u64) -> Self {
        DrawStream {
            inner: Xoshiro256PlusPlus::seed_from_u64(seed),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`; exactly `lo` when the range is empty. Always
    /// consumes one draw.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        let u = self.unit();
        if hi > lo {
            lo + (hi - lo) * u
        } else {
            lo
        }
    }

    /// True with probability `p`. Always consumes one draw.
    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.unit() < p
    }

    /// Uniform index in `0..n` by multiply-shift (`n > 0`).
    pub fn index(&mut self, n: usize) -> usize {
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }
}

/// SplitMix64 output function.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-frame seed: `mix64(global + (index + 1) · 0x9E3779B97F4A7C15)`,
/// i.e. the `index`-th SplitMix64 output of a stream started at `global`.
pub fn frame_seed(global: u64, index: u64) -> u64 {
    mix64(global.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)))
}
