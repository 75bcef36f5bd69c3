//! Seeded randomness shared by every sampler in the crate.
//!
//! All randomness comes from ChaCha8 keyed by a `u64` seed, so a seed fixes
//! the stream on every platform. Monte Carlo trial `i` of an experiment with
//! base seed `s` uses seed `s.wrapping_add(i)` on stream 0; auxiliary
//! consumers (dataset generation, bootstrap resampling) use other ChaCha
//! streams of the same seed so they never overlap the trial streams.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// ChaCha stream used for synthetic dataset generation.
pub const DATA_STREAM: u64 = 1;
/// ChaCha stream used for bootstrap resampling.
pub const BOOTSTRAP_STREAM: u64 = 2;

#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { seed, inner }
    }

    /// Generator for Monte Carlo trial `trial` of an experiment.
    pub fn for_trial(base_seed: u64, trial: u64) -> Self {
        Self::new(base_seed.wrapping_add(trial))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform draw on the open interval (0, 1).
    ///
    /// Takes the top 53 bits of one `u64` and centres them in their cell:
    /// `u = (x >> 11 + 0.5) / 2^53`. Never returns 0 or 1.
    pub fn uniform_open01(&mut self) -> f64 {
        let bits = self.inner.next_u64() >> 11;
        (bits as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }
}

impl RngCore for SeededRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}
