//! Censored Weibull-mixture negative log-likelihood over a batch, and its
//! gradient with respect to the network's raw head outputs.
//!
//! For row `i` with mixture `(alpha, beta, eta)`:
//!
//! ```text
//! event:     LL_i = log sum_k alpha_k f_k(t_i)
//! censored:  LL_i = log sum_k alpha_k S_k(t*)     t* = t_c (global) or t_i
//! loss       = -sum_i LL_i
//! ```
//!
//! The loss is a sum, not a mean. Raw head outputs map to parameters as
//! `alpha = softmax(a)`, `beta = elu(b) + 2`, `eta = elu(c) + 1 + eps`.

use ndarray::{Array2, ArrayView1, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::weibull::{MixtureParams, WeibullParams};

/// Default offset keeping the scale strictly above zero.
pub const DEFAULT_OFFSET_EPSILON: f64 = 1e-4;

/// Row-sum tolerance for the weight matrix of a [`BatchParams`].
pub const ROW_SUM_TOLERANCE: f64 = 1e-7;

const SHAPE_OFFSET: f64 = 2.0;

/// ELU with unit constant.
#[inline]
pub fn elu(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        z.exp_m1()
    }
}

#[inline]
fn elu_derivative(z: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else {
        z.exp()
    }
}

/// Shape from an ELU activation in `(-1, inf)`: lands in `(1, inf)`.
#[inline]
pub fn offset_shape(activation: f64) -> f64 {
    activation + SHAPE_OFFSET
}

/// Scale from an ELU activation in `(-1, inf)`: lands in `(eps, inf)`.
#[inline]
pub fn offset_scale(activation: f64, epsilon: f64) -> f64 {
    activation + 1.0 + epsilon
}

/// One Weibull mixture per observation, stored as three `n x p` matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchParams {
    alpha: Array2<f64>,
    beta: Array2<f64>,
    eta: Array2<f64>,
}

impl BatchParams {
    pub fn new(alpha: Array2<f64>, beta: Array2<f64>, eta: Array2<f64>) -> Result<Self> {
        if alpha.dim() != beta.dim() || alpha.dim() != eta.dim() {
            return Err(Error::DimensionMismatch(format!(
                "alpha {:?}, beta {:?}, eta {:?}",
                alpha.dim(),
                beta.dim(),
                eta.dim()
            )));
        }
        if alpha.ncols() == 0 {
            return Err(Error::InvalidParams("mixture needs at least one component".into()));
        }
        for (i, row) in alpha.rows().into_iter().enumerate() {
            if row.iter().any(|a| !(0.0..=1.0).contains(a)) {
                return Err(Error::InvalidParams(format!("row {i}: weight outside [0, 1]")));
            }
            let total = row.sum();
            if (total - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::InvalidParams(format!("row {i}: weights sum to {total}")));
            }
        }
        if beta.iter().any(|b| !b.is_finite() || *b < 1.0) {
            return Err(Error::InvalidParams("every shape must be finite and >= 1".into()));
        }
        if eta.iter().any(|e| !e.is_finite() || *e <= 0.0) {
            return Err(Error::InvalidParams("every scale must be finite and > 0".into()));
        }
        Ok(Self { alpha, beta, eta })
    }

    /// Stacks per-observation mixtures that share a component count.
    pub fn from_mixtures(mixtures: &[MixtureParams]) -> Result<Self> {
        let p = mixtures.first().map_or(0, MixtureParams::len);
        if mixtures.iter().any(|m| m.len() != p) {
            return Err(Error::DimensionMismatch("mixtures differ in component count".into()));
        }
        let n = mixtures.len();
        let mut alpha = Array2::zeros((n, p));
        let mut beta = Array2::zeros((n, p));
        let mut eta = Array2::zeros((n, p));
        for (i, m) in mixtures.iter().enumerate() {
            for (k, (a, w)) in m.iter().enumerate() {
                alpha[[i, k]] = a;
                beta[[i, k]] = w.beta();
                eta[[i, k]] = w.eta();
            }
        }
        Self::new(alpha, beta, eta)
    }

    pub(crate) fn from_parts_unchecked(
        alpha: Array2<f64>,
        beta: Array2<f64>,
        eta: Array2<f64>,
    ) -> Self {
        Self { alpha, beta, eta }
    }

    pub fn n_rows(&self) -> usize {
        self.alpha.nrows()
    }

    pub fn n_components(&self) -> usize {
        self.alpha.ncols()
    }

    pub fn alpha(&self) -> &Array2<f64> {
        &self.alpha
    }

    pub fn beta(&self) -> &Array2<f64> {
        &self.beta
    }

    pub fn eta(&self) -> &Array2<f64> {
        &self.eta
    }

    pub fn row(&self, i: usize) -> Result<MixtureParams> {
        let parts = (0..self.n_components())
            .map(|k| {
                Ok((
                    self.alpha[[i, k]],
                    WeibullParams::new(self.beta[[i, k]], self.eta[[i, k]])?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        MixtureParams::new(parts)
    }

    pub fn rows(&self) -> Result<Vec<MixtureParams>> {
        (0..self.n_rows()).map(|i| self.row(i)).collect()
    }

    /// Rows in the order given by `indices`.
    pub fn select(&self, indices: &[usize]) -> Self {
        let pick = |m: &Array2<f64>| m.select(ndarray::Axis(0), indices);
        Self {
            alpha: pick(&self.alpha),
            beta: pick(&self.beta),
            eta: pick(&self.eta),
        }
    }
}

/// Where the survival term of a censored row is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "threshold", rename_all = "snake_case")]
pub enum CensoringSpec {
    /// Every censored row uses the single threshold `t_c`.
    GlobalThreshold(f64),
    /// Each censored row uses its own recorded time.
    PerObservation,
}

impl CensoringSpec {
    pub fn global(threshold: f64) -> Result<Self> {
        if threshold.is_finite() && threshold > 0.0 {
            Ok(Self::GlobalThreshold(threshold))
        } else {
            Err(Error::Domain(format!("censoring threshold must be > 0, got {threshold}")))
        }
    }

    #[inline]
    pub fn censor_time(&self, observed: f64) -> f64 {
        match *self {
            Self::GlobalThreshold(t_c) => t_c,
            Self::PerObservation => observed,
        }
    }
}

/// Raw, pre-activation outputs of the network heads (`n x p` each).
///
/// `alpha_logits` is `None` for a single component: there is no
/// classification head to train.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadOutputs {
    pub alpha_logits: Option<Array2<f64>>,
    pub beta_raw: Array2<f64>,
    pub eta_raw: Array2<f64>,
}

/// Gradient of the loss with respect to each [`HeadOutputs`] entry.
pub type HeadGradients = HeadOutputs;

impl HeadOutputs {
    pub fn n_rows(&self) -> usize {
        self.beta_raw.nrows()
    }

    pub fn n_components(&self) -> usize {
        self.beta_raw.ncols()
    }

    fn check_shapes(&self) -> Result<()> {
        let dim = self.beta_raw.dim();
        let alpha_ok = match &self.alpha_logits {
            Some(a) => a.dim() == dim && dim.1 > 1,
            None => dim.1 == 1,
        };
        if self.eta_raw.dim() != dim || !alpha_ok || dim.1 == 0 {
            return Err(Error::DimensionMismatch(format!(
                "head outputs: beta {:?}, eta {:?}, alpha {:?}",
                dim,
                self.eta_raw.dim(),
                self.alpha_logits.as_ref().map(|a| a.dim())
            )));
        }
        Ok(())
    }

    /// Applies softmax, ELU and offsets.
    pub fn to_params(&self, offset_epsilon: f64) -> Result<BatchParams> {
        self.check_shapes()?;
        let alpha = match &self.alpha_logits {
            Some(logits) => log_softmax_rows(logits).mapv_into(f64::exp),
            None => Array2::ones(self.beta_raw.dim()),
        };
        let beta = self.beta_raw.mapv(|z| offset_shape(elu(z)));
        let eta = self.eta_raw.mapv(|z| offset_scale(elu(z), offset_epsilon));
        Ok(BatchParams::from_parts_unchecked(alpha, beta, eta))
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            alpha_logits: self.alpha_logits.as_ref().map(|a| Array2::zeros(a.dim())),
            beta_raw: Array2::zeros(self.beta_raw.dim()),
            eta_raw: Array2::zeros(self.eta_raw.dim()),
        }
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        let pick = |m: &Array2<f64>| m.select(ndarray::Axis(0), indices);
        Self {
            alpha_logits: self.alpha_logits.as_ref().map(pick),
            beta_raw: pick(&self.beta_raw),
            eta_raw: pick(&self.eta_raw),
        }
    }
}

pub(crate) fn log_softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        row.mapv_inplace(|v| v - lse);
    }
    out
}

fn check_observations(n: usize, times: &[f64], events: &[bool]) -> Result<()> {
    if times.len() != n || events.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{n} parameter rows, {} times, {} event flags",
            times.len(),
            events.len()
        )));
    }
    if let Some(t) = times.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
        return Err(Error::Domain(format!("observed times must be finite and > 0, got {t}")));
    }
    Ok(())
}

/// Per-component log terms of one row, plus what the gradient needs.
///
/// `terms[k] = log alpha_k + log f_k(t)` for events, `log alpha_k + log S_k(t*)`
/// otherwise. `dterm_dbeta[k]` and `dterm_deta[k]` are the partials of
/// `terms[k]` with respect to the component's shape and scale.
struct RowScratch {
    terms: Vec<f64>,
    dterm_dbeta: Vec<f64>,
    dterm_deta: Vec<f64>,
}

impl RowScratch {
    fn new(p: usize) -> Self {
        Self {
            terms: vec![0.0; p],
            dterm_dbeta: vec![0.0; p],
            dterm_deta: vec![0.0; p],
        }
    }

    /// Fills the scratch for one row and returns the row log-likelihood.
    fn fill(
        &mut self,
        log_alpha: ArrayView1<f64>,
        beta: ArrayView1<f64>,
        eta: ArrayView1<f64>,
        event: bool,
        time: f64,
    ) -> f64 {
        for k in 0..self.terms.len() {
            let (b, e) = (beta[k], eta[k]);
            let log_ratio = time.ln() - e.ln();
            let u = (b * log_ratio).exp();
            if event {
                self.terms[k] =
                    log_alpha[k] + b.ln() - e.ln() + (b - 1.0) * log_ratio - u;
                self.dterm_dbeta[k] = 1.0 / b + log_ratio * (1.0 - u);
                self.dterm_deta[k] = b * (u - 1.0) / e;
            } else {
                self.terms[k] = log_alpha[k] - u;
                self.dterm_dbeta[k] = -u * log_ratio;
                self.dterm_deta[k] = b * u / e;
            }
        }
        crate::weibull::log_sum_exp(&self.terms)
    }
}

/// `-sum_i [delta_i LL1_i + (1 - delta_i) LL2_i]` at the given parameters.
pub fn negative_log_likelihood(
    params: &BatchParams,
    times: &[f64],
    events: &[bool],
    cens: &CensoringSpec,
) -> Result<f64> {
    check_observations(params.n_rows(), times, events)?;
    let log_alpha = params.alpha.mapv(f64::ln);
    let mut scratch = RowScratch::new(params.n_components());
    let mut total = 0.0;
    for i in 0..params.n_rows() {
        let t = if events[i] { times[i] } else { cens.censor_time(times[i]) };
        total -= scratch.fill(
            log_alpha.row(i),
            params.beta.row(i),
            params.eta.row(i),
            events[i],
            t,
        );
    }
    Ok(total)
}

/// Per-row terms `-LL_i`, in row order. Sums to [`negative_log_likelihood`].
pub fn per_row_nll(
    params: &BatchParams,
    times: &[f64],
    events: &[bool],
    cens: &CensoringSpec,
) -> Result<Vec<f64>> {
    check_observations(params.n_rows(), times, events)?;
    let log_alpha = params.alpha.mapv(f64::ln);
    let mut scratch = RowScratch::new(params.n_components());
    Ok((0..params.n_rows())
        .map(|i| {
            let t = if events[i] { times[i] } else { cens.censor_time(times[i]) };
            -scratch.fill(log_alpha.row(i), params.beta.row(i), params.eta.row(i), events[i], t)
        })
        .collect())
}

/// Loss and its gradient with respect to the raw head outputs.
///
/// The chain runs through log-softmax for the weights and through the ELU
/// activation plus offset for shapes and scales.
pub fn nll_gradients(
    raw: &HeadOutputs,
    offset_epsilon: f64,
    times: &[f64],
    events: &[bool],
    cens: &CensoringSpec,
) -> Result<(f64, HeadGradients)> {
    raw.check_shapes()?;
    let (n, p) = raw.beta_raw.dim();
    check_observations(n, times, events)?;

    let log_alpha = match &raw.alpha_logits {
        Some(logits) => log_softmax_rows(logits),
        None => Array2::zeros((n, p)),
    };
    let beta = raw.beta_raw.mapv(|z| offset_shape(elu(z)));
    let eta = raw.eta_raw.mapv(|z| offset_scale(elu(z), offset_epsilon));

    let mut grads = raw.zeros_like();
    let mut scratch = RowScratch::new(p);
    let mut loss = 0.0;
    for i in 0..n {
        let t = if events[i] { times[i] } else { cens.censor_time(times[i]) };
        let row_ll = scratch.fill(log_alpha.row(i), beta.row(i), eta.row(i), events[i], t);
        loss -= row_ll;
        for k in 0..p {
            // d(-LL_i)/d term_k = -responsibility_k
            let resp = (scratch.terms[k] - row_ll).exp();
            grads.beta_raw[[i, k]] =
                -resp * scratch.dterm_dbeta[k] * elu_derivative(raw.beta_raw[[i, k]]);
            grads.eta_raw[[i, k]] =
                -resp * scratch.dterm_deta[k] * elu_derivative(raw.eta_raw[[i, k]]);
            if let Some(g) = grads.alpha_logits.as_mut() {
                g[[i, k]] = log_alpha[[i, k]].exp() - resp;
            }
        }
    }
    Ok((loss, grads))
}

/// Loss at raw head outputs, without gradients.
pub fn nll_from_heads(
    raw: &HeadOutputs,
    offset_epsilon: f64,
    times: &[f64],
    events: &[bool],
    cens: &CensoringSpec,
) -> Result<f64> {
    negative_log_likelihood(&raw.to_params(offset_epsilon)?, times, events, cens)
}

/// Number of rows violating the output constraints (`beta > 1`,
/// `eta > eps`, weight rows summing to 1 within `1e-6`).
pub fn constraint_violations(params: &BatchParams, offset_epsilon: f64) -> usize {
    let mut bad = 0;
    Zip::from(params.beta.rows())
        .and(params.eta.rows())
        .and(params.alpha.rows())
        .for_each(|b, e, a| {
            let ok = b.iter().all(|&v| v > 1.0)
                && e.iter().all(|&v| v > offset_epsilon)
                && (a.sum() - 1.0).abs() <= 1e-6;
            if !ok {
                bad += 1;
            }
        });
    bad
}
