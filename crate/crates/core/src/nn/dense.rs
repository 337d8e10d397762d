use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Fully connected layer `y = x W + b` with `W` stored as `input x output`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub(crate) weights: Array2<f64>,
    pub(crate) bias: Array1<f64>,
}

impl Dense {
    /// Fan-in scaled normal initialization (`std = sqrt(2 / fan_in)`), zero bias.
    pub fn he_init<R: Rng + ?Sized>(input: usize, output: usize, rng: &mut R) -> Self {
        let std = (2.0 / input as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("finite standard deviation");
        Self {
            weights: Array2::from_shape_simple_fn((input, output), || normal.sample(rng)),
            bias: Array1::zeros(output),
        }
    }

    pub fn from_parts(weights: Array2<f64>, bias: Array1<f64>) -> Self {
        assert_eq!(weights.ncols(), bias.len(), "bias length must match output width");
        Self { weights, bias }
    }

    pub fn input_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn bias(&self) -> &Array1<f64> {
        &self.bias
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.weights) + &self.bias
    }

    /// Returns `(dW, db, dx)`; `dx` is skipped when not needed.
    pub fn backward(
        &self,
        input: &Array2<f64>,
        dy: &Array2<f64>,
        need_input_grad: bool,
    ) -> (Array2<f64>, Array1<f64>, Option<Array2<f64>>) {
        let dw = input.t().dot(dy);
        let db = dy.sum_axis(Axis(0));
        let dx = need_input_grad.then(|| dy.dot(&self.weights.t()));
        (dw, db, dx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn forward_is_affine() {
        let layer = Dense::from_parts(array![[1.0, 2.0], [3.0, 4.0]], array![0.5, -0.5]);
        assert_eq!(layer.forward(&array![[1.0, 1.0]]), array![[4.5, 5.5]]);
    }

    #[test]
    fn backward_shapes_and_values() {
        let layer = Dense::from_parts(array![[1.0, 2.0], [3.0, 4.0]], array![0.0, 0.0]);
        let x = array![[1.0, 2.0], [0.0, 1.0]];
        let dy = array![[1.0, 0.0], [0.0, 1.0]];
        let (dw, db, dx) = layer.backward(&x, &dy, true);
        assert_eq!(dw, array![[1.0, 0.0], [2.0, 1.0]]);
        assert_eq!(db, array![1.0, 1.0]);
        assert_eq!(dx.unwrap(), array![[1.0, 3.0], [2.0, 4.0]]);
    }

    #[test]
    fn init_scale_follows_fan_in() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let layer = Dense::he_init(200, 300, &mut rng);
        let n = layer.weights.len() as f64;
        let var = layer.weights.iter().map(|w| w * w).sum::<f64>() / n;
        assert!((var - 0.01).abs() < 0.001, "{var}");
        assert!(layer.bias.iter().all(|&b| b == 0.0));
    }
}
