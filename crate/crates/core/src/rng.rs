//! Portable pseudo-random numbers.
//!
//! Every random draw in the crate goes through [`PortableRng`], so a seed
//! reproduces the same stream on every platform and can be re-implemented
//! in another language from this description alone:
//!
//! * state: xoshiro256** (Blackman & Vigna), four `u64` words, seeded from a
//!   `u64` by four consecutive SplitMix64 outputs;
//! * `next_f64`: `(x >> 11) * 2^-53`, uniform on `[0, 1)`;
//! * `below(n)`: Lemire's multiply-shift with rejection, uniform on `0..n`;
//! * `normal()`: Box-Muller on two uniforms, `u1` mapped to `(0, 1]` via
//!   `1 - next_f64()`, returning the cosine branch only (no cached spare).

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;

#[derive(Debug, Clone)]
pub struct PortableRng {
    inner: Xoshiro256StarStar,
}

impl PortableRng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: Xoshiro256StarStar::seed_from_u64(seed),
        }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on `[0, 1)` with 53 bits of precision.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..n`. Panics if `n == 0`.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        let threshold = n.wrapping_neg() % n;
        loop {
            let m = (self.next_u64() as u128) * (n as u128);
            if (m as u64) >= threshold {
                return (m >> 64) as u64;
            }
        }
    }

    /// Standard normal draw.
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// In-place Fisher-Yates shuffle, walking from the last slot down.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }

    /// Derives an independent child stream, e.g. one per experiment cell.
    pub fn fork(&mut self) -> PortableRng {
        PortableRng::new(self.next_u64())
    }
}
