//! Synthetic covariate-conditional Weibull mixtures with a scalar covariate
//! `x ~ U[0, 1]` and polynomial parameter functions.
//!
//! Rows of each coefficient table are the parameters
//! `[β_single, η_single, β_0.7, η_0.7, β_0.3, η_0.3]`; columns are the
//! coefficients of `[x³, x², x, 1]`. The single-component case uses the
//! first two rows, the two-component case the remaining four with weights
//! `(0.7, 0.3)`.

use std::str::FromStr;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::Dataset;
use crate::error::{Error, Result};
use crate::mixloss::{negative_log_likelihood, per_row_nll, BatchParams, CensoringSpec};
use crate::weibull::{sample, MixtureParams, WeibullParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FunctionId {
    Linear,
    Quadratic,
    Cubic,
}

impl FunctionId {
    pub const ALL: [FunctionId; 3] = [FunctionId::Linear, FunctionId::Quadratic, FunctionId::Cubic];

    pub fn name(self) -> &'static str {
        match self {
            FunctionId::Linear => "linear",
            FunctionId::Quadratic => "quadratic",
            FunctionId::Cubic => "cubic",
        }
    }

    fn coefficients(self) -> &'static [[f64; 4]; 6] {
        match self {
            FunctionId::Linear => &LINEAR,
            FunctionId::Quadratic => &QUADRATIC,
            FunctionId::Cubic => &CUBIC,
        }
    }
}

impl std::fmt::Display for FunctionId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FunctionId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear" => Ok(FunctionId::Linear),
            "quadratic" => Ok(FunctionId::Quadratic),
            "cubic" => Ok(FunctionId::Cubic),
            other => Err(Error::Config(format!("unknown generator function `{other}`"))),
        }
    }
}

#[rustfmt::skip]
const LINEAR: [[f64; 4]; 6] = [
    [0.0, 0.0, 3.0, 2.0],
    [0.0, 0.0, 2.0, 1.0],
    [0.0, 0.0, 2.0, 1.0],
    [0.0, 0.0, 1.0, 2.0],
    [0.0, 0.0, 1.0, 2.0],
    [0.0, 0.0, 3.0, 1.0],
];

#[rustfmt::skip]
const QUADRATIC: [[f64; 4]; 6] = [
    [0.0, 2.0, 1.0, 1.0],
    [0.0, 1.0, 2.0, 1.0],
    [0.0, 2.0, 2.0, 1.0],
    [0.0, 1.0, 3.0, 1.0],
    [0.0, 1.0, 1.0, 2.0],
    [0.0, 1.0, 0.0, 2.0],
];

#[rustfmt::skip]
const CUBIC: [[f64; 4]; 6] = [
    [2.0, 0.0, 1.0, 1.0],
    [1.0, 1.0, 0.0, 1.0],
    [2.0, 0.0, 1.0, 1.0],
    [1.0, 1.0, 0.0, 1.0],
    [1.0, 2.0, 0.0, 1.0],
    [3.0, 2.0, 0.0, 1.0],
];

pub const MIXTURE_WEIGHTS: [f64; 2] = [0.7, 0.3];

fn poly(c: &[f64; 4], x: f64) -> f64 {
    ((c[0] * x + c[1]) * x + c[2]) * x + c[3]
}

/// Ground-truth mixture at covariate value `x`.
pub fn true_params(function: FunctionId, p: usize, x: f64) -> Result<MixtureParams> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("covariate must lie in [0, 1], got {x}")));
    }
    let c = function.coefficients();
    match p {
        1 => MixtureParams::new(vec![(1.0, WeibullParams::new(poly(&c[0], x), poly(&c[1], x))?)]),
        2 => MixtureParams::new(vec![
            (MIXTURE_WEIGHTS[0], WeibullParams::new(poly(&c[2], x), poly(&c[3], x))?),
            (MIXTURE_WEIGHTS[1], WeibullParams::new(poly(&c[4], x), poly(&c[5], x))?),
        ]),
        other => Err(Error::Config(format!("generators exist for p = 1 or 2, got {other}"))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub function: FunctionId,
    pub p: usize,
    pub n: usize,
    pub censor_fraction: f64,
    pub seed: u64,
}

impl GeneratorSpec {
    pub fn new(function: FunctionId, p: usize, seed: u64) -> Self {
        Self {
            function,
            p,
            n: 10_000,
            censor_fraction: 0.5,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("generator needs n > 0".into()));
        }
        if !(0.0..1.0).contains(&self.censor_fraction) {
            return Err(Error::Config(format!(
                "censor fraction must be in [0, 1), got {}",
                self.censor_fraction
            )));
        }
        if !(1..=2).contains(&self.p) {
            return Err(Error::Config(format!("generators exist for p = 1 or 2, got {}", self.p)));
        }
        Ok(())
    }
}

/// True per-record parameters and the likelihood they give the sample.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub params: BatchParams,
    pub censoring: CensoringSpec,
    pub nll: f64,
}

impl GroundTruth {
    pub fn subset(&self, dataset: &Dataset, indices: &[usize]) -> Result<Self> {
        let params = self.params.select(indices);
        let sub = dataset.select(indices);
        let nll = negative_log_likelihood(&params, sub.times(), sub.events(), &self.censoring)?;
        Ok(Self {
            params,
            censoring: self.censoring,
            nll,
        })
    }
}

/// Linear-interpolation quantile of unsorted data (`q = 0.5` is the median).
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Draws the sample. Records above the `1 - censor_fraction` quantile of
/// the drawn times are censored at that quantile.
pub fn generate(spec: &GeneratorSpec) -> Result<(Dataset, GroundTruth)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut xs = Vec::with_capacity(spec.n);
    let mut times = Vec::with_capacity(spec.n);
    let mut mixtures = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let x: f64 = rng.random();
        let m = true_params(spec.function, spec.p, x)?;
        times.push(sample(&m, &mut rng));
        xs.push(x);
        mixtures.push(m);
    }
    let threshold = quantile(&times, 1.0 - spec.censor_fraction);
    let events: Vec<bool> = times.iter().map(|&t| t <= threshold).collect();
    let censoring = CensoringSpec::global(threshold)?;
    let dataset = Dataset::from_quantitative(Array2::from_shape_vec((spec.n, 1), xs).expect("n x 1"), times, events, &["x"])?;
    let params = BatchParams::from_mixtures(&mixtures)?;
    let nll = negative_log_likelihood(&params, dataset.times(), dataset.events(), &censoring)?;
    Ok((dataset, GroundTruth { params, censoring, nll }))
}

/// NLL of `dataset` at the true parameters.
pub fn real_nll(dataset: &Dataset, truth: &GroundTruth) -> Result<f64> {
    negative_log_likelihood(&truth.params, dataset.times(), dataset.events(), &truth.censoring)
}

/// Per-record NLL terms at the true parameters.
pub fn real_nll_terms(dataset: &Dataset, truth: &GroundTruth) -> Result<Vec<f64>> {
    per_row_nll(&truth.params, dataset.times(), dataset.events(), &truth.censoring)
}
