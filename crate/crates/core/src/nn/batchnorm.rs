//! Batch normalization over the row (batch) axis.
//!
//! Training mode normalizes with the batch mean and biased batch variance and
//! folds them into the running statistics:
//!
//! ```text
//! running = momentum * running + (1 - momentum) * batch
//! ```
//!
//! Inference mode normalizes with the running statistics.

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub(crate) scale: Array1<f64>,
    pub(crate) shift: Array1<f64>,
    pub(crate) running_mean: Array1<f64>,
    pub(crate) running_var: Array1<f64>,
    pub(crate) momentum: f64,
    pub(crate) epsilon: f64,
}

/// Values the backward pass needs from a training-mode forward.
#[derive(Debug, Clone)]
pub struct BatchNormCache {
    normalized: Array2<f64>,
    inv_std: Array1<f64>,
}

/// Batch mean and biased variance of one training forward.
#[derive(Debug, Clone)]
pub struct BatchStats {
    pub mean: Array1<f64>,
    pub var: Array1<f64>,
}

impl BatchNorm {
    pub fn new(width: usize) -> Self {
        Self {
            scale: Array1::ones(width),
            shift: Array1::zeros(width),
            running_mean: Array1::zeros(width),
            running_var: Array1::ones(width),
            momentum: BN_MOMENTUM,
            epsilon: BN_EPSILON,
        }
    }

    pub fn width(&self) -> usize {
        self.scale.len()
    }

    pub fn running_mean(&self) -> &Array1<f64> {
        &self.running_mean
    }

    pub fn running_var(&self) -> &Array1<f64> {
        &self.running_var
    }

    pub fn momentum(&self) -> f64 {
        self.momentum
    }

    /// Training-mode normalization without touching the running statistics.
    pub fn forward_train(
        &self,
        x: &Array2<f64>,
    ) -> Result<(Array2<f64>, BatchNormCache, BatchStats)> {
        let n = x.nrows();
        if n < 2 {
            return Err(Error::BatchTooSmall(n));
        }
        let mean = x.mean_axis(Axis(0)).expect("non-empty batch");
        let centered = x - &mean;
        let var = centered.mapv(|v| v * v).mean_axis(Axis(0)).expect("non-empty batch");
        let inv_std = var.mapv(|v| 1.0 / (v + self.epsilon).sqrt());
        let normalized = centered * &inv_std;
        let out = &normalized * &self.scale + &self.shift;
        Ok((out, BatchNormCache { normalized, inv_std }, BatchStats { mean, var }))
    }

    pub fn forward_inference(&self, x: &Array2<f64>) -> Array2<f64> {
        let inv_std = self.running_var.mapv(|v| 1.0 / (v + self.epsilon).sqrt());
        (x - &self.running_mean) * &inv_std * &self.scale + &self.shift
    }

    pub fn update_running(&mut self, stats: &BatchStats) {
        let m = self.momentum;
        self.running_mean = &self.running_mean * m + &stats.mean * (1.0 - m);
        self.running_var = &self.running_var * m + &stats.var * (1.0 - m);
    }

    /// Normalizes `x`; in training mode also updates the running statistics.
    pub fn forward(&mut self, x: &Array2<f64>, training: bool) -> Result<Array2<f64>> {
        if training {
            let (out, _, stats) = self.forward_train(x)?;
            self.update_running(&stats);
            Ok(out)
        } else {
            Ok(self.forward_inference(x))
        }
    }

    /// Returns `(dx, dscale, dshift)`.
    pub fn backward(
        &self,
        cache: &BatchNormCache,
        dy: &Array2<f64>,
    ) -> (Array2<f64>, Array1<f64>, Array1<f64>) {
        let n = dy.nrows() as f64;
        let dshift = dy.sum_axis(Axis(0));
        let dscale = (dy * &cache.normalized).sum_axis(Axis(0));
        let dnorm = dy * &self.scale;
        let sum_dnorm = dnorm.sum_axis(Axis(0));
        let sum_dnorm_norm = (&dnorm * &cache.normalized).sum_axis(Axis(0));
        let dx = (dnorm * n - &sum_dnorm - &cache.normalized * &sum_dnorm_norm)
            * &(&cache.inv_std / n);
        (dx, dscale, dshift)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-3.0..5.0))
    }

    #[test]
    fn constant_column_maps_to_shift() {
        let mut bn = BatchNorm::new(2);
        let x = array![[3.0, 1.0], [3.0, 2.0], [3.0, 6.0]];
        let out = bn.forward(&x, true).unwrap();
        assert!(out.column(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn training_output_is_standardized() {
        let bn = BatchNorm::new(4);
        let (out, _, _) = bn.forward_train(&random(64, 4, 1)).unwrap();
        for col in out.columns() {
            let mean = col.mean().unwrap();
            let var = col.mapv(|v| (v - mean).powi(2)).mean().unwrap();
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn single_row_batch_is_rejected_in_training() {
        let mut bn = BatchNorm::new(3);
        assert!(matches!(bn.forward(&random(1, 3, 0), true), Err(Error::BatchTooSmall(1))));
        assert!(bn.forward(&random(1, 3, 0), false).is_ok());
    }

    #[test]
    fn running_statistics_follow_the_recurrence() {
        let mut bn = BatchNorm::new(3);
        bn.scale = array![1.5, 0.5, 2.0];
        bn.shift = array![0.1, -0.2, 0.0];
        let x = random(32, 3, 2);
        let train_out = bn.forward(&x, true).unwrap();

        let mean = x.mean_axis(Axis(0)).unwrap();
        let var = x.var_axis(Axis(0), 0.0);
        // One update from (mean 0, var 1):
        let rm = &mean * 0.1;
        let rv = var.mapv(|v| 0.9 + 0.1 * v);
        let expected = (&x - &rm) / rv.mapv(|v| (v + BN_EPSILON).sqrt()) * &bn.scale + &bn.shift;
        let infer = bn.forward(&x, false).unwrap();
        for (a, b) in infer.iter().zip(expected.iter()) {
            assert_relative_eq!(a, b, max_relative = 1e-12);
        }

        // Repeated updates on the same batch converge geometrically (0.9^k).
        for _ in 0..299 {
            bn.forward(&x, true).unwrap();
        }
        let infer = bn.forward(&x, false).unwrap();
        let gap = (&infer - &train_out).mapv(f64::abs).fold(0.0, |a: f64, &b| a.max(b));
        assert!(gap < 1e-10, "{gap}");
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut bn = BatchNorm::new(3);
        bn.scale = array![1.2, -0.7, 0.4];
        bn.shift = array![0.3, 0.0, -1.0];
        let x = random(6, 3, 3);
        let weights = random(6, 3, 4);
        let loss = |bn: &BatchNorm, x: &Array2<f64>| {
            let (out, _, _) = bn.forward_train(x).unwrap();
            (&out * &weights).sum()
        };
        let (_, cache, _) = bn.forward_train(&x).unwrap();
        let (dx, dscale, dshift) = bn.backward(&cache, &weights);
        let h = 1e-6;
        for i in 0..6 {
            for j in 0..3 {
                let mut xp = x.clone();
                xp[[i, j]] += h;
                let mut xm = x.clone();
                xm[[i, j]] -= h;
                let fd = (loss(&bn, &xp) - loss(&bn, &xm)) / (2.0 * h);
                assert_relative_eq!(dx[[i, j]], fd, epsilon = 1e-7, max_relative = 1e-6);
            }
        }
        for j in 0..3 {
            let mut plus = bn.clone();
            plus.scale[j] += h;
            let mut minus = bn.clone();
            minus.scale[j] -= h;
            let fd = (loss(&plus, &x) - loss(&minus, &x)) / (2.0 * h);
            assert_relative_eq!(dscale[j], fd, epsilon = 1e-7, max_relative = 1e-6);
            assert_relative_eq!(dshift[j], weights.column(j).sum(), epsilon = 1e-12);
        }
    }
}
