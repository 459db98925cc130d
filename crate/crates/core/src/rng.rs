//! Deterministic random streams for audit inputs.
//!
//! Every random quantity in the crate is drawn from ChaCha8 (a 64-bit
//! counter-based generator), seeded with `ChaCha8Rng::seed_from_u64(seed)`.
//! Independent sub-streams of the same seed are selected with the ChaCha
//! stream id. Floats are produced from the top 53 bits of `next_u64`, so the
//! sequence does not depend on any distribution code outside this module.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Seeded stream `stream` of the generator.
pub fn seeded(seed: u64, stream: u64) -> SeededStream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    SeededStream { rng }
}

pub struct SeededStream {
    rng: ChaCha8Rng,
}

impl SeededStream {
    /// Uniform in `[0, 1)` with 53 bits of resolution.
    pub fn unit(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    /// Uniform in `[-a, a)`.
    pub fn symmetric(&mut self, a: f64) -> f64 {
        a * (2.0 * self.unit() - 1.0)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }
}
