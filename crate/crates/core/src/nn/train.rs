//! Minibatch training with early stopping on validation NLL.

use ndarray::Axis;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::{split_validation, Dataset, ScalerStats};
use crate::error::{Error, Result};
use crate::mixloss::{negative_log_likelihood, nll_gradients, BatchParams, CensoringSpec, DEFAULT_OFFSET_EPSILON};
use crate::nn::adam::{adam_step, AdamConfig, OptimizerState};
use crate::nn::network::{Architecture, NetworkModel, DEFAULT_HEAD_WIDTHS, DEFAULT_TRUNK_WIDTHS};

/// How the censored term of the loss picks its evaluation time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum CensoringMode {
    /// One threshold for every censored row. Without an explicit value the
    /// smallest censored time of the training data is used, which is the
    /// threshold itself for administratively censored data.
    Global { threshold: Option<f64> },
    PerObservation,
}

impl CensoringMode {
    pub fn resolve(&self, train: &Dataset) -> Result<CensoringSpec> {
        match *self {
            CensoringMode::PerObservation => Ok(CensoringSpec::PerObservation),
            CensoringMode::Global { threshold: Some(t) } => CensoringSpec::global(t),
            CensoringMode::Global { threshold: None } => {
                let censored_min = train
                    .times()
                    .iter()
                    .zip(train.events())
                    .filter(|(_, &e)| !e)
                    .map(|(&t, _)| t)
                    .fold(f64::INFINITY, f64::min);
                let t = if censored_min.is_finite() {
                    censored_min
                } else {
                    train.times().iter().copied().fold(f64::NEG_INFINITY, f64::max)
                };
                CensoringSpec::global(t)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub n_components: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub offset_epsilon: f64,
    pub censoring: CensoringMode,
    pub folds: usize,
    pub val_fraction: f64,
    pub seed: u64,
    pub trunk_widths: Vec<usize>,
    pub head_widths: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            n_components: 1,
            learning_rate: 1e-4,
            batch_size: 256,
            max_epochs: 500,
            patience: 20,
            offset_epsilon: DEFAULT_OFFSET_EPSILON,
            censoring: CensoringMode::PerObservation,
            folds: 5,
            val_fraction: 0.2,
            seed: 0,
            trunk_widths: DEFAULT_TRUNK_WIDTHS.to_vec(),
            head_widths: DEFAULT_HEAD_WIDTHS.to_vec(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.n_components == 0 {
            return fail("p must be >= 1".into());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return fail(format!("learning_rate must be >= 0, got {}", self.learning_rate));
        }
        if self.batch_size < 2 {
            return fail(format!("batch_size must be >= 2, got {}", self.batch_size));
        }
        if self.max_epochs == 0 {
            return fail("max_epochs must be >= 1".into());
        }
        if !(self.offset_epsilon.is_finite() && self.offset_epsilon > 0.0) {
            return fail(format!("offset_epsilon must be > 0, got {}", self.offset_epsilon));
        }
        if self.folds < 2 {
            return fail(format!("folds must be >= 2, got {}", self.folds));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return fail(format!("val_fraction must be in [0, 1), got {}", self.val_fraction));
        }
        if let CensoringMode::Global { threshold: Some(t) } = self.censoring {
            if !(t.is_finite() && t > 0.0) {
                return fail(format!("censoring threshold must be > 0, got {t}"));
            }
        }
        Ok(())
    }

    pub fn architecture(&self, input_dim: usize) -> Architecture {
        Architecture {
            input_dim,
            n_components: self.n_components,
            trunk_widths: self.trunk_widths.clone(),
            head_widths: self.head_widths.clone(),
        }
    }
}

/// Mean per-record NLL after one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_nll: f64,
    pub val_nll: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Weights of the epoch with the lowest validation NLL.
    pub model: NetworkModel,
    pub trace: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub censoring: CensoringSpec,
}

/// Holds out a validation split, then trains.
pub fn train(dataset: &Dataset, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let all: Vec<usize> = (0..dataset.n_rows()).collect();
    let (train_idx, val_idx) = split_validation(&all, config.val_fraction, config.seed);
    let train_set = dataset.select(&train_idx);
    let val_set = dataset.select(&val_idx);
    let censoring = config.censoring.resolve(&train_set)?;
    train_with_validation(&train_set, &val_set, config, censoring, &mut |_| {})
}

/// Batches of `batch_size`; a trailing single row joins the previous batch
/// because batch normalization needs two rows.
fn batches(order: &[usize], batch_size: usize) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = order.chunks(batch_size).collect();
    if out.len() > 1 && out.last().is_some_and(|b| b.len() == 1) {
        out.pop();
        let start = (out.len() - 1) * batch_size;
        *out.last_mut().expect("at least one batch") = &order[start..];
    }
    out
}

/// Trains on `train` with early stopping on `val` (raw, unscaled features).
/// The scaler is fitted on `train` and stored in the returned model.
/// `monitor` sees the mixture parameters of every forward pass.
pub fn train_with_validation(
    train: &Dataset,
    val: &Dataset,
    config: &TrainConfig,
    censoring: CensoringSpec,
    monitor: &mut dyn FnMut(&BatchParams),
) -> Result<TrainOutcome> {
    config.validate()?;
    if train.n_rows() < 2 {
        return Err(Error::DatasetTooSmall(format!("{} training rows; need at least 2", train.n_rows())));
    }
    if val.n_features() != train.n_features() {
        return Err(Error::DimensionMismatch("validation and training features differ".into()));
    }

    let scaler = ScalerStats::fit(train.features())?;
    let x_train = scaler.transform(train.features())?;
    let x_val = scaler.transform(val.features())?;
    let eps = config.offset_epsilon;

    let mut model = NetworkModel::new(config.architecture(train.n_features()), eps, config.seed)?;
    model.set_preprocessing(scaler, train.feature_names());
    let mut optimizer = OptimizerState::for_model(
        &model,
        AdamConfig {
            learning_rate: config.learning_rate,
            ..AdamConfig::default()
        },
    );
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    shuffle_rng.set_stream(1);

    let mut order: Vec<usize> = (0..train.n_rows()).collect();
    let mut trace = Vec::new();
    let mut best: Option<(f64, usize, NetworkModel)> = None;
    let mut since_best = 0;

    for epoch in 1..=config.max_epochs {
        let diverged = |e: Error| match e {
            Error::NonFiniteActivation { layer } => Error::Diverged {
                epoch,
                detail: format!("non-finite values in {layer}"),
            },
            other => other,
        };
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for batch in batches(&order, config.batch_size) {
            let x = x_train.select(Axis(0), batch);
            let times: Vec<f64> = batch.iter().map(|&i| train.times()[i]).collect();
            let events: Vec<bool> = batch.iter().map(|&i| train.events()[i]).collect();
            let pass = model.forward(&x, true).map_err(diverged)?;
            monitor(&pass.params);
            let (loss, head_grads) = nll_gradients(&pass.heads, eps, &times, &events, &censoring)?;
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    detail: format!("training loss is {loss}"),
                });
            }
            let grads = model.backward(&pass.cache, &head_grads)?;
            if grads.iter_flat().any(|g| !g.is_finite()) {
                return Err(Error::Diverged {
                    epoch,
                    detail: "non-finite gradient".into(),
                });
            }
            adam_step(&mut model, &mut optimizer, &grads)?;
            epoch_loss += loss;
        }
        let train_nll = epoch_loss / train.n_rows() as f64;

        let val_nll = if val.is_empty() {
            train_nll
        } else {
            let params = model.infer(&x_val).map_err(diverged)?;
            monitor(&params);
            negative_log_likelihood(&params, val.times(), val.events(), &censoring)? / val.n_rows() as f64
        };
        if !val_nll.is_finite() {
            return Err(Error::Diverged {
                epoch,
                detail: format!("validation loss is {val_nll}"),
            });
        }
        trace.push(EpochRecord { epoch, train_nll, val_nll });
        log::debug!("epoch {epoch}: train {train_nll:.6} val {val_nll:.6}");

        if best.as_ref().is_none_or(|(b, _, _)| val_nll < *b) {
            best = Some((val_nll, epoch, model.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                log::debug!("early stop at epoch {epoch}");
                break;
            }
        }
    }

    let (_, best_epoch, model) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        model,
        trace,
        best_epoch,
        censoring,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixloss::constraint_violations;
    use ndarray::Array2;
    use rand::Rng;

    fn toy(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let times: Vec<f64> = x
            .iter()
            .map(|&xi| {
                let u: f64 = rng.random_range(1e-6..1.0);
                (1.0 + 2.0 * xi) * (-u.ln()).powf(1.0 / (2.0 + 3.0 * xi))
            })
            .collect();
        let events = times.iter().map(|&t| t <= 1.5).collect();
        Dataset::from_quantitative(Array2::from_shape_vec((n, 1), x).unwrap(), times, events, &["x"]).unwrap()
    }

    fn small_config(epochs: usize) -> TrainConfig {
        TrainConfig {
            n_components: 2,
            learning_rate: 1e-3,
            batch_size: 32,
            max_epochs: epochs,
            patience: 100,
            censoring: CensoringMode::Global { threshold: Some(1.5) },
            trunk_widths: vec![16, 8, 8],
            head_widths: vec![8, 4],
            seed: 4,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn batches_never_leave_a_single_row() {
        let order: Vec<usize> = (0..9).collect();
        let sizes: Vec<usize> = batches(&order, 4).iter().map(|b| b.len()).collect();
        assert_eq!(sizes, vec![4, 5]);
        let sizes: Vec<usize> = batches(&order, 3).iter().map(|b| b.len()).collect();
        assert_eq!(sizes, vec![3, 3, 3]);
        assert_eq!(batches(&order[..2], 256).len(), 1);
    }

    #[test]
    fn global_threshold_defaults_to_smallest_censored_time() {
        let ds = toy(50, 1);
        let spec = CensoringMode::Global { threshold: None }.resolve(&ds).unwrap();
        let expected = ds
            .times()
            .iter()
            .zip(ds.events())
            .filter(|(_, e)| !**e)
            .map(|(t, _)| *t)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(spec, CensoringSpec::GlobalThreshold(expected));
        assert!(expected > 1.5);
    }

    #[test]
    fn training_loss_decreases_and_is_deterministic() {
        let ds = toy(400, 2);
        let a = train(&ds, &small_config(10)).unwrap();
        let b = train(&ds, &small_config(10)).unwrap();
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.model, b.model);
        let first = a.trace.first().unwrap().train_nll;
        let last = a.trace.last().unwrap().train_nll;
        assert!(last < first, "{first} -> {last}");
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let ds = toy(100, 3);
        let config = TrainConfig {
            learning_rate: 0.0,
            ..small_config(3)
        };
        let outcome = train(&ds, &config).unwrap();
        let fresh = NetworkModel::new(config.architecture(1), config.offset_epsilon, config.seed).unwrap();
        assert_eq!(outcome.model.parameters(), fresh.parameters());
    }

    #[test]
    fn every_forward_pass_satisfies_constraints() {
        let ds = toy(200, 5);
        let config = small_config(5);
        let mut passes = 0;
        let mut violations = 0;
        let all: Vec<usize> = (0..200).collect();
        let (tr, va) = split_validation(&all, 0.2, 0);
        let (tr, va) = (ds.select(&tr), ds.select(&va));
        train_with_validation(&tr, &va, &config, CensoringSpec::GlobalThreshold(1.5), &mut |p| {
            passes += 1;
            violations += constraint_violations(p, config.offset_epsilon);
        })
        .unwrap();
        assert!(passes > 10);
        assert_eq!(violations, 0);
    }

    #[test]
    fn early_stopping_returns_best_epoch() {
        let ds = toy(200, 6);
        let config = TrainConfig {
            learning_rate: 0.05,
            patience: 2,
            ..small_config(200)
        };
        let outcome = train(&ds, &config).unwrap();
        let best = outcome
            .trace
            .iter()
            .min_by(|a, b| a.val_nll.total_cmp(&b.val_nll))
            .unwrap();
        assert_eq!(best.epoch, outcome.best_epoch);
        assert!(outcome.trace.len() < 200);
        assert_eq!(outcome.trace.len(), outcome.best_epoch + 2);
    }

    #[test]
    fn rejects_bad_config() {
        let ds = toy(20, 7);
        let mut config = small_config(1);
        config.batch_size = 1;
        assert!(matches!(train(&ds, &config), Err(Error::Config(_))));
        config = small_config(1);
        config.n_components = 0;
        assert!(train(&ds, &config).is_err());
    }
}
