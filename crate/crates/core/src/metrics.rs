//! Concordance index, lifetime predictions and censoring-threshold tools.
//!
//! A pair `(i, j)` is comparable when `t_i > t_j` and `j` had an event; it is
//! concordant when additionally `pred_i > pred_j`. Both indicators are
//! strict, so tied predictions never count as concordant.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::dataio::Dataset;
use crate::error::{Error, Result};
use crate::mixloss::BatchParams;
use crate::nn::NetworkModel;
use crate::weibull::{mean_lifetime, mixture_log_survival};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvaluationResult {
    pub c_index: f64,
    pub comparable_pairs: u64,
    pub concordant_pairs: u64,
}

/// Binary indexed tree over prediction ranks.
struct Fenwick {
    tree: Vec<u64>,
}

impl Fenwick {
    fn new(n: usize) -> Self {
        Self { tree: vec![0; n + 1] }
    }

    fn add(&mut self, rank: usize) {
        let mut i = rank + 1;
        while i < self.tree.len() {
            self.tree[i] += 1;
            i += i & i.wrapping_neg();
        }
    }

    /// Number of inserted ranks `<= rank`.
    fn prefix(&self, rank: usize) -> u64 {
        let mut i = rank + 1;
        let mut sum = 0;
        while i > 0 {
            sum += self.tree[i];
            i -= i & i.wrapping_neg();
        }
        sum
    }
}

/// Exact concordance index in `O(n log n)`.
pub fn concordance_index(times: &[f64], predictions: &[f64], events: &[bool]) -> Result<EvaluationResult> {
    let n = times.len();
    if predictions.len() != n || events.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{n} times, {} predictions, {} events",
            predictions.len(),
            events.len()
        )));
    }
    if n < 2 {
        return Err(Error::DatasetTooSmall(format!("concordance needs at least 2 records, got {n}")));
    }
    if times.iter().chain(predictions).any(|v| v.is_nan()) {
        return Err(Error::Domain("times and predictions must not be NaN".into()));
    }

    let mut sorted_preds = predictions.to_vec();
    sorted_preds.sort_by(f64::total_cmp);
    sorted_preds.dedup();
    let rank = |p: f64| sorted_preds.partition_point(|&q| q < p);

    // Walk times from largest to smallest; everything already inserted has a
    // strictly larger time than the current group.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| times[b].total_cmp(&times[a]));
    let mut tree = Fenwick::new(sorted_preds.len());
    let mut inserted = 0u64;
    let mut comparable = 0u64;
    let mut concordant = 0u64;
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && times[order[end]] == times[order[start]] {
            end += 1;
        }
        for &j in &order[start..end] {
            if events[j] {
                comparable += inserted;
                concordant += inserted - tree.prefix(rank(predictions[j]));
            }
        }
        for &j in &order[start..end] {
            tree.add(rank(predictions[j]));
            inserted += 1;
        }
        start = end;
    }

    if comparable == 0 {
        return Err(Error::NoComparablePairs);
    }
    Ok(EvaluationResult {
        c_index: concordant as f64 / comparable as f64,
        comparable_pairs: comparable,
        concordant_pairs: concordant,
    })
}

/// Mixture means, row by row.
pub fn mean_lifetimes(params: &BatchParams) -> Result<Vec<f64>> {
    Ok(params.rows()?.iter().map(mean_lifetime).collect())
}

/// `S(horizon)` for every row.
pub fn survival_probabilities(params: &BatchParams, horizon: f64) -> Result<Vec<f64>> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::Domain(format!("horizon must be > 0, got {horizon}")));
    }
    params
        .rows()?
        .iter()
        .map(|m| mixture_log_survival(horizon, m).map(f64::exp))
        .collect()
}

fn warn_if_unscaled(model: &NetworkModel, x: &Array2<f64>) {
    let columns = model.unscaled_columns(x);
    if !columns.is_empty() {
        log::warn!(
            "feature columns {columns:?} have |mean| > 4 after standardization; was the input scaled with the model's scaler?"
        );
    }
}

/// Mean lifetime of each row of standardized features `x`.
pub fn predict_mean_lifetime(model: &NetworkModel, x: &Array2<f64>) -> Result<Vec<f64>> {
    warn_if_unscaled(model, x);
    mean_lifetimes(&model.infer(x)?)
}

/// Survival probability at `horizon` for each row of standardized features `x`.
pub fn survival_at_horizon(model: &NetworkModel, x: &Array2<f64>, horizon: f64) -> Result<Vec<f64>> {
    warn_if_unscaled(model, x);
    survival_probabilities(&model.infer(x)?, horizon)
}

/// Score used to rank records in [`horizon_cindex`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankingStatistic {
    #[default]
    SurvivalAtHorizon,
    MeanLifetime,
}

/// Concordance index at a survival horizon; higher survival means a later
/// predicted event. `x` holds standardized features.
pub fn horizon_cindex(
    model: &NetworkModel,
    x: &Array2<f64>,
    times: &[f64],
    events: &[bool],
    horizon: f64,
    statistic: RankingStatistic,
) -> Result<EvaluationResult> {
    let params = model.infer(x)?;
    horizon_cindex_from_params(&params, times, events, horizon, statistic)
}

pub fn horizon_cindex_from_params(
    params: &BatchParams,
    times: &[f64],
    events: &[bool],
    horizon: f64,
    statistic: RankingStatistic,
) -> Result<EvaluationResult> {
    let scores = match statistic {
        RankingStatistic::SurvivalAtHorizon => survival_probabilities(params, horizon)?,
        RankingStatistic::MeanLifetime => mean_lifetimes(params)?,
    };
    concordance_index(times, &scores, events)
}

/// Recomputes every event indicator as `t < t_c`.
pub fn recensor(dataset: &Dataset, threshold: f64) -> Result<Dataset> {
    if !(threshold.is_finite() && threshold > 0.0) {
        return Err(Error::Domain(format!("censoring threshold must be > 0, got {threshold}")));
    }
    dataset.with_events(dataset.times().iter().map(|&t| t < threshold).collect())
}
