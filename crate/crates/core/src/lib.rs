//! Covariate-conditional Weibull mixture survival models.
//!
//! A neural network maps covariates to the weights, shapes and scales of a
//! Weibull mixture and is trained on the right-censored mixture likelihood.

pub mod dataio;
pub mod error;
pub mod metrics;
pub mod mixloss;
pub mod nn;
pub mod synthgen;
pub mod weibull;

pub use dataio::{Dataset, FeatureKind, FoldPlan, Schema, ScalerStats};
pub use error::{Error, Result};
pub use metrics::{EvaluationResult, RankingStatistic};
pub use mixloss::{BatchParams, CensoringSpec, HeadOutputs};
pub use synthgen::{FunctionId, GeneratorSpec, GroundTruth};
pub use nn::{Architecture, NetworkModel, TrainConfig};
pub use weibull::{MixtureParams, WeibullParams};
