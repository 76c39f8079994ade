//! SplitMix64 and the samplers built on it.
//!
//! The stream is fixed so that any implementation can reproduce synthetic data
//! bit for bit:
//!
//! ```text
//! state = state + 0x9E3779B97F4A7C15            (wrapping)
//! z = state
//! z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9      (wrapping)
//! z = (z ^ (z >> 27)) * 0x94D049BB133111EB      (wrapping)
//! output z ^ (z >> 31)
//! ```
//!
//! `uniform` keeps the top 53 bits: `(next >> 11) * 2^-53`, giving `[0, 1)`.
//! `gaussian` is Box–Muller drawing `u1` then `u2` and returning
//! `sqrt(-2 ln(1 - u1)) * cos(2 pi u2)`; the sine branch is discarded, so every
//! Gaussian costs exactly two outputs.

use std::f64::consts::PI;

#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on `[lo, hi)`.
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn gaussian(&mut self) -> f64 {
        let u1 = self.uniform();
        let u2 = self.uniform();
        (-2.0 * (1.0 - u1).ln()).sqrt() * (2.0 * PI * u2).cos()
    }

    pub fn gaussian_vec(&mut self, dim: usize) -> Vec<f64> {
        (0..dim).map(|_| self.gaussian()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_stream() {
        let expected: [u64; 5] = [
            6457827717110365317,
            3203168211198807973,
            9817491932198370423,
            4593380528125082431,
            16408922859458223821,
        ];
        let mut rng = SplitMix64::new(1234567);
        for e in expected {
            assert_eq!(rng.next_u64(), e);
        }
        let mut rng = SplitMix64::new(0);
        assert_eq!(rng.next_u64(), 16294208416658607535);
        assert_eq!(rng.next_u64(), 7960286522194355700);
        assert_eq!(rng.next_u64(), 487617019471545679);
    }

    #[test]
    fn uniform_and_gaussian_vectors() {
        let mut rng = SplitMix64::new(42);
        assert_eq!(rng.uniform(), 0.7415648787718233);
        assert_eq!(rng.uniform(), 0.1599103928769201);
        assert_eq!(rng.uniform(), 0.27860113025513866);
        let mut rng = SplitMix64::new(42);
        assert!((rng.gaussian() - 0.8822489062222688).abs() < 1e-15);
    }

    #[test]
    fn uniform_range() {
        let mut rng = SplitMix64::new(9);
        for _ in 0..10_000 {
            let u = rng.uniform();
            assert!((0.0..1.0).contains(&u));
            assert!(rng.gaussian().is_finite());
        }
    }
}
