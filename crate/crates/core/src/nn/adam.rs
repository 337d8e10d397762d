use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::network::{Gradients, NetworkModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Moment accumulators shaped like the parameter tensors they track.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    config: AdamConfig,
    step: u64,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new(config: AdamConfig, tensor_lengths: &[usize]) -> Self {
        Self {
            config,
            step: 0,
            first_moment: tensor_lengths.iter().map(|&n| vec![0.0; n]).collect(),
            second_moment: tensor_lengths.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn for_model(model: &NetworkModel, config: AdamConfig) -> Self {
        let lengths: Vec<usize> = model.parameters().iter().map(|p| p.len()).collect();
        Self::new(config, &lengths)
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update over every tensor.
    pub fn apply(&mut self, params: Vec<&mut [f64]>, grads: &[Vec<f64>]) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.first_moment.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} parameter tensors, {} gradient tensors, {} moment tensors",
                params.len(),
                grads.len(),
                self.first_moment.len()
            )));
        }
        for (idx, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != g.len() || p.len() != self.first_moment[idx].len() {
                return Err(Error::DimensionMismatch(format!(
                    "tensor {idx}: {} parameters, {} gradients",
                    p.len(),
                    g.len()
                )));
            }
        }

        self.step += 1;
        let AdamConfig {
            learning_rate: lr,
            beta1: b1,
            beta2: b2,
            epsilon: eps,
        } = self.config;
        let correction1 = 1.0 - b1.powf(self.step as f64);
        let correction2 = 1.0 - b2.powf(self.step as f64);
        for (((p, g), m), v) in params
            .into_iter()
            .zip(grads)
            .zip(&mut self.first_moment)
            .zip(&mut self.second_moment)
        {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let m_hat = m[i] / correction1;
                let v_hat = v[i] / correction2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Applies one Adam step to every trainable tensor of `model`.
pub fn adam_step(
    model: &mut NetworkModel,
    state: &mut OptimizerState,
    grads: &Gradients,
) -> Result<()> {
    state.apply(model.parameters_mut(), grads.tensors())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn scalar_state() -> OptimizerState {
        OptimizerState::new(AdamConfig::default(), &[1])
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        for g in [3.0, -0.25, 1e-3] {
            let mut state = scalar_state();
            let mut p = [1.0];
            state.apply(vec![&mut p[..]], &[vec![g]]).unwrap();
            let expected = 1.0 - 1e-4 * g / (g.abs() + 1e-8);
            assert_relative_eq!(p[0], expected, epsilon = 1e-15);
            assert_relative_eq!(p[0], 1.0 - 1e-4 * g.signum(), epsilon = 1e-9);
        }
    }

    #[test]
    fn zero_gradient_leaves_parameter_and_counts_step() {
        let mut state = scalar_state();
        let mut p = [0.7];
        state.apply(vec![&mut p[..]], &[vec![0.0]]).unwrap();
        assert_eq!(p[0], 0.7);
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn constant_gradient_moves_monotonically() {
        // Scalar trace of the recurrence: with constant g, m_hat = g and
        // v_hat = g^2 at every step, so each step is -lr * g / (|g| + eps).
        let mut state = scalar_state();
        let mut p = [0.0];
        let g = 0.5;
        let mut trace = vec![p[0]];
        for _ in 0..2 {
            state.apply(vec![&mut p[..]], &[vec![g]]).unwrap();
            trace.push(p[0]);
        }
        assert!(trace[1] < trace[0] && trace[2] < trace[1]);
        let step = 1e-4 * g / (g + 1e-8);
        assert_relative_eq!(trace[2], -2.0 * step, epsilon = 1e-15);
    }

    #[test]
    fn rejects_shape_mismatch() {
        let mut state = OptimizerState::new(AdamConfig::default(), &[2]);
        let mut p = [0.0, 0.0];
        assert!(state.apply(vec![&mut p[..]], &[vec![1.0]]).is_err());
        assert!(state.apply(vec![], &[]).is_err());
    }
}
