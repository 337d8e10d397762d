//! Two-parameter Weibull and finite Weibull-mixture mathematics.
//!
//! Everything that feeds a likelihood is evaluated in the log domain. With
//! `u = (t/eta)^beta`:
//!
//! ```text
//! log S(t) = -u
//! log f(t) = log(beta) - log(eta) + (beta - 1) (log t - log eta) - u
//! ```
//!
//! Mixture terms are combined with a max-shifted log-sum-exp so that large
//! shapes (where `u` overflows any linear-domain evaluation) stay finite.

use rand::Rng;
use rand_distr::Open01;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `sum(alpha) == 1` for a validated [`MixtureParams`].
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

/// Shape/scale pair of a single Weibull component.
///
/// The shape is restricted to `beta >= 1` so the hazard is non-decreasing;
/// trained networks always produce `beta > 1`, but `beta == 1` (the
/// exponential law) is accepted here.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeibullParams {
    beta: f64,
    eta: f64,
}

impl WeibullParams {
    pub fn new(beta: f64, eta: f64) -> Result<Self> {
        if !beta.is_finite() || beta < 1.0 {
            return Err(Error::InvalidParams(format!(
                "shape must be finite and >= 1, got {beta}"
            )));
        }
        if !eta.is_finite() || eta <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "scale must be finite and > 0, got {eta}"
            )));
        }
        Ok(Self { beta, eta })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// `eta * Gamma(1 + 1/beta)`.
    pub fn mean(&self) -> f64 {
        self.eta * gamma_unchecked(1.0 + 1.0 / self.beta)
    }
}

/// Weighted collection of Weibull components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureParams {
    weights: Vec<f64>,
    components: Vec<WeibullParams>,
}

impl MixtureParams {
    pub fn new(components: Vec<(f64, WeibullParams)>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidParams("mixture needs at least one component".into()));
        }
        let mut weights = Vec::with_capacity(components.len());
        let mut params = Vec::with_capacity(components.len());
        for (alpha, w) in components {
            if !(0.0..=1.0).contains(&alpha) {
                return Err(Error::InvalidParams(format!(
                    "mixture weight must lie in [0, 1], got {alpha}"
                )));
            }
            weights.push(alpha);
            params.push(w);
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(Error::InvalidParams(format!(
                "mixture weights must sum to 1, got {total}"
            )));
        }
        if weights.len() == 1 {
            weights[0] = 1.0;
        }
        Ok(Self {
            weights,
            components: params,
        })
    }

    pub fn single(w: WeibullParams) -> Self {
        Self {
            weights: vec![1.0],
            components: vec![w],
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[WeibullParams] {
        &self.components
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, &WeibullParams)> {
        self.weights.iter().copied().zip(self.components.iter())
    }
}

fn check_time(t: f64) -> Result<()> {
    if t.is_finite() && t > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("time must be finite and > 0, got {t}")))
    }
}

#[inline]
pub(crate) fn log_survival_raw(t: f64, beta: f64, eta: f64) -> f64 {
    -(beta * (t / eta).ln()).exp()
}

#[inline]
pub(crate) fn log_density_raw(t: f64, beta: f64, eta: f64) -> f64 {
    let log_ratio = t.ln() - eta.ln();
    beta.ln() - eta.ln() + (beta - 1.0) * log_ratio - (beta * log_ratio).exp()
}

/// `log S(t) = -(t/eta)^beta`.
pub fn log_survival(t: f64, w: &WeibullParams) -> Result<f64> {
    check_time(t)?;
    Ok(log_survival_raw(t, w.beta, w.eta))
}

/// Log of the density `S(t) * hazard(t)`.
pub fn log_density(t: f64, w: &WeibullParams) -> Result<f64> {
    check_time(t)?;
    Ok(log_density_raw(t, w.beta, w.eta))
}

/// Max-shifted `log(sum(exp(terms)))`. A single term is returned as is.
pub fn log_sum_exp(terms: &[f64]) -> f64 {
    match terms {
        [] => f64::NEG_INFINITY,
        [only] => *only,
        _ => {
            let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if max == f64::NEG_INFINITY || max.is_nan() {
                return max;
            }
            if max == f64::INFINITY {
                return f64::INFINITY;
            }
            max + terms.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
        }
    }
}

fn mixture_log_terms(m: &MixtureParams, f: impl Fn(&WeibullParams) -> f64) -> Result<f64> {
    if m.len() == 1 {
        return Ok(f(&m.components[0]));
    }
    let terms: Vec<f64> = m.iter().map(|(alpha, w)| alpha.ln() + f(w)).collect();
    let value = log_sum_exp(&terms);
    if value == f64::NEG_INFINITY && m.weights.iter().all(|&a| a == 0.0) {
        return Err(Error::Domain("all mixture weights are zero".into()));
    }
    Ok(value)
}

/// `log sum_k alpha_k S_k(t)`.
pub fn mixture_log_survival(t: f64, m: &MixtureParams) -> Result<f64> {
    check_time(t)?;
    mixture_log_terms(m, |w| log_survival_raw(t, w.beta, w.eta))
}

/// `log sum_k alpha_k f_k(t)`.
pub fn mixture_log_density(t: f64, m: &MixtureParams) -> Result<f64> {
    check_time(t)?;
    mixture_log_terms(m, |w| log_density_raw(t, w.beta, w.eta))
}

// Lanczos approximation, g = 7 with nine coefficients.
const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Largest integer argument whose Gamma value is finite in `f64`.
const MAX_INTEGER_ARG: f64 = 171.0;

fn gamma_unchecked(x: f64) -> f64 {
    if x.fract() == 0.0 && x <= MAX_INTEGER_ARG {
        // Exact factorial (exact in f64 up to 22!).
        return (2..x as u64).fold(1.0, |acc, k| acc * k as f64);
    }
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return pi / ((pi * x).sin() * gamma_unchecked(1.0 - x));
    }
    let x = x - 1.0;
    let mut series = LANCZOS_COEF[0];
    for (i, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        series += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    (2.0 * std::f64::consts::PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * series
}

/// Gamma function for positive arguments.
pub fn gamma_fn(x: f64) -> Result<f64> {
    if !x.is_finite() || x <= 0.0 {
        return Err(Error::Domain(format!("gamma argument must be finite and > 0, got {x}")));
    }
    Ok(gamma_unchecked(x))
}

/// Mixture mean `sum_k alpha_k eta_k Gamma(1 + 1/beta_k)`.
pub fn mean_lifetime(m: &MixtureParams) -> f64 {
    m.iter().map(|(alpha, w)| alpha * w.mean()).sum()
}

/// Time at which the survival function of `w` equals `u`: `eta (-ln u)^(1/beta)`.
pub fn time_at_survival(u: f64, w: &WeibullParams) -> f64 {
    w.eta * (-u.ln()).powf(1.0 / w.beta)
}

/// Draws one lifetime: a component by weight, then an inverse-transform draw.
pub fn sample<R: Rng + ?Sized>(m: &MixtureParams, rng: &mut R) -> f64 {
    let k = pick_component(m.weights(), rng.random::<f64>());
    let u: f64 = rng.sample(Open01);
    time_at_survival(u, &m.components[k])
}

fn pick_component(weights: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (k, &alpha) in weights.iter().enumerate() {
        acc += alpha;
        if u < acc {
            return k;
        }
    }
    // Rounding left `acc` marginally below 1: take the last weighted component.
    weights.iter().rposition(|&a| a > 0.0).unwrap_or(0)
}
