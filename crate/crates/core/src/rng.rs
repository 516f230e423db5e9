//! Seeded random streams shared by initialization, growth and data order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::tensor::Scalar;

pub type Rng = ChaCha8Rng;

/// Deterministic generator for `(seed, stream)`; distinct streams are
/// independent so that e.g. initialization and data order never share draws.
pub fn rng(seed: u64, stream: u64) -> Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

pub fn normal<T: Scalar>(rng: &mut Rng, std: f64) -> T {
    let n = Normal::new(0.0f64, std).expect("standard deviation must be finite and non-negative");
    T::lift(n.sample(rng))
}

pub fn uniform(rng: &mut Rng, lo: f64, hi: f64) -> f64 {
    Uniform::new(lo, hi).expect("empty uniform range").sample(rng)
}
