//! Deterministic, seeded sample generation.
//!
//! The generator is pinned to ChaCha8 (`rand_chacha`), which produces an
//! identical stream for a given 64-bit seed on every platform, so any sample
//! is reproducible byte for byte from `(model, n, seed)`.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{CscmError, Result};
use crate::model::{ModelSpec, Observation, Sample};

/// Portable seeded generator wrapping ChaCha8.
#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    rng: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng { seed, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform draw from the open interval (0, 1). Excluding 0 keeps the
    /// inverse-CDF mark strictly positive, so `z = 0` remains the exclusive
    /// encoding of a not-yet-occurred event.
    pub fn uniform_open(&mut self) -> f64 {
        loop {
            let u: f64 = self.rng.random();
            if u > 0.0 {
                return u;
            }
        }
    }
}

/// Seed for a replicate in a batch: `base + index`, wrapping.
pub fn replicate_seed(base: u64, index: u64) -> u64 {
    base.wrapping_add(index)
}

/// Draws `n` observations from the model by inverse-CDF transforms.
///
/// Per observation three uniforms are consumed in a fixed order: event time,
/// mark given event time, inspection time. The record is `(t, y)` when the
/// event time is at most the inspection time and `(t, 0)` otherwise.
pub fn draw_sample(model: &ModelSpec, n: usize, seed: u64) -> Result<Sample> {
    if n == 0 {
        return Err(CscmError::InvalidArgument("sample size must be at least 1".into()));
    }
    let mut rng = SeededRng::new(seed);
    let mut obs = Vec::with_capacity(n);
    for _ in 0..n {
        let u1 = rng.uniform_open();
        let u2 = rng.uniform_open();
        let u3 = rng.uniform_open();
        let (x, y) = model.event_from_uniforms(u1, u2);
        let t = model.inspection_from_uniform(u3);
        let z = if x <= t { y } else { 0.0 };
        obs.push(Observation::new(t, z)?);
    }
    Sample::new(obs)
}
