//! Fixtures shared by the benchmarks.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use weimix_core::mixloss::HeadOutputs;

/// Random raw head outputs for `n` rows and `p` components.
pub fn random_heads(n: usize, p: usize, seed: u64) -> HeadOutputs {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |scale: f64| Array2::from_shape_simple_fn((n, p), || rng.random_range(-scale..scale));
    HeadOutputs {
        alpha_logits: (p > 1).then(|| draw(2.0)),
        beta_raw: draw(0.5),
        eta_raw: draw(0.5),
    }
}

/// Times in `(0.05, 3)` and roughly 60% events.
pub fn random_outcomes(n: usize, seed: u64) -> (Vec<f64>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let times = (0..n).map(|_| rng.random_range(0.05..3.0)).collect();
    let events = (0..n).map(|_| rng.random_bool(0.6)).collect();
    (times, events)
}

pub fn random_features(n: usize, d: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_simple_fn((n, d), || rng.random_range(-2.0..2.0))
}
