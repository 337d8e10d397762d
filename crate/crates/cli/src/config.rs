//! Flat key-value run configuration. Precedence: defaults, then the config
//! file, then command-line flags.

use std::path::Path;

use serde::{Deserialize, Serialize};
use weimix_core::metrics::RankingStatistic;
use weimix_core::nn::{CensoringMode, TrainConfig};

use crate::error::CliError;

/// Keys accepted in a config file. Every key is optional.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub p: Option<usize>,
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub max_epochs: Option<usize>,
    pub patience: Option<usize>,
    pub offset_epsilon: Option<f64>,
    pub censoring: Option<CensoringKind>,
    pub censoring_threshold: Option<f64>,
    pub folds: Option<usize>,
    pub val_fraction: Option<f64>,
    pub seed: Option<u64>,
    pub trunk_widths: Option<Vec<usize>>,
    pub head_widths: Option<Vec<usize>>,
    pub n_samples: Option<usize>,
    pub censor_fraction: Option<f64>,
    pub max_relative_gap: Option<f64>,
    pub ranking: Option<RankingStatistic>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CensoringKind {
    PerObservation,
    Global,
}

/// Fully resolved configuration, echoed at the top of every report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub p: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub offset_epsilon: f64,
    pub censoring: CensoringKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub censoring_threshold: Option<f64>,
    pub folds: usize,
    pub val_fraction: f64,
    pub seed: u64,
    pub trunk_widths: Vec<usize>,
    pub head_widths: Vec<usize>,
    pub n_samples: usize,
    pub censor_fraction: f64,
    pub max_relative_gap: f64,
    pub ranking: RankingStatistic,
    /// Whether `p` came from the file or the command line.
    #[serde(skip)]
    pub p_explicit: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            p: t.n_components,
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            max_epochs: t.max_epochs,
            patience: t.patience,
            offset_epsilon: t.offset_epsilon,
            censoring: CensoringKind::PerObservation,
            censoring_threshold: None,
            folds: t.folds,
            val_fraction: t.val_fraction,
            seed: t.seed,
            trunk_widths: t.trunk_widths,
            head_widths: t.head_widths,
            n_samples: 10_000,
            censor_fraction: 0.5,
            max_relative_gap: 0.05,
            ranking: RankingStatistic::SurvivalAtHorizon,
            p_explicit: false,
        }
    }
}

/// Values given on the command line.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub p: Option<usize>,
    pub seed: Option<u64>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>, overrides: Overrides) -> Result<Self, CliError> {
        let file = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::config(format!("cannot read {}: {e}", p.display())))?;
                toml::from_str::<FileConfig>(&text)
                    .map_err(|e| CliError::config(format!("{}: {e}", p.display())))?
            }
            None => FileConfig::default(),
        };
        let config = Self::default().merge(file, overrides);
        config.validate()?;
        Ok(config)
    }

    fn merge(mut self, f: FileConfig, o: Overrides) -> Self {
        self.p_explicit = f.p.is_some() || o.p.is_some();
        macro_rules! take {
            ($($field:ident),*) => { $( if let Some(v) = f.$field { self.$field = v; } )* };
        }
        take!(
            p, learning_rate, batch_size, max_epochs, patience, offset_epsilon, censoring, folds,
            val_fraction, seed, trunk_widths, head_widths, n_samples, censor_fraction,
            max_relative_gap, ranking
        );
        if f.censoring_threshold.is_some() {
            self.censoring_threshold = f.censoring_threshold;
        }
        if let Some(p) = o.p {
            self.p = p;
        }
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        self
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(CliError::config(format!("learning_rate must be > 0, got {}", self.learning_rate)));
        }
        if self.censoring == CensoringKind::PerObservation && self.censoring_threshold.is_some() {
            return Err(CliError::config("censoring_threshold requires censoring = \"global\""));
        }
        if self.n_samples < 10 {
            return Err(CliError::config(format!("n_samples must be >= 10, got {}", self.n_samples)));
        }
        if !(0.0..1.0).contains(&self.censor_fraction) {
            return Err(CliError::config(format!("censor_fraction must be in [0, 1), got {}", self.censor_fraction)));
        }
        if !(self.max_relative_gap.is_finite() && self.max_relative_gap > 0.0) {
            return Err(CliError::config("max_relative_gap must be > 0"));
        }
        self.train_config().validate().map_err(CliError::from)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            n_components: self.p,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            patience: self.patience,
            offset_epsilon: self.offset_epsilon,
            censoring: match self.censoring {
                CensoringKind::PerObservation => CensoringMode::PerObservation,
                CensoringKind::Global => CensoringMode::Global {
                    threshold: self.censoring_threshold,
                },
            },
            folds: self.folds,
            val_fraction: self.val_fraction,
            seed: self.seed,
            trunk_widths: self.trunk_widths.clone(),
            head_widths: self.head_widths.clone(),
        }
    }

    /// `# key = value` lines for report headers.
    pub fn header_lines(&self) -> Vec<String> {
        toml::to_string(self)
            .expect("config serializes")
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| format!("# {l}"))
            .collect()
    }
}
