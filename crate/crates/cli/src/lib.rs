//! Command-line front end: argument parsing and dispatch.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use weimix_core::synthgen::FunctionId;

use crate::config::{Overrides, RunConfig};
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "weimix", version, about = "Weibull mixture survival models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Flat TOML file with run settings
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of mixture components
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

impl Common {
    fn run_config(&self) -> Result<RunConfig, CliError> {
        RunConfig::load(
            self.config.as_deref(),
            Overrides {
                p: self.p,
                seed: self.seed,
            },
        )
    }
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// CSV file with a header row
    #[arg(long)]
    pub data: PathBuf,
    /// TOML schema naming the time, event and feature columns
    #[arg(long)]
    pub schema: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FunctionChoice {
    Linear,
    Quadratic,
    Cubic,
    All,
}

impl FunctionChoice {
    pub fn functions(self) -> Vec<FunctionId> {
        match self {
            FunctionChoice::Linear => vec![FunctionId::Linear],
            FunctionChoice::Quadratic => vec![FunctionId::Quadratic],
            FunctionChoice::Cubic => vec![FunctionId::Cubic],
            FunctionChoice::All => FunctionId::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train on synthetic data and compare held-out likelihoods with the truth
    SynthValidate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "all")]
        function: FunctionChoice,
    },
    /// k-fold cross-validated training
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Mean lifetimes and survival probabilities from a saved model
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        /// Comma-separated survival horizons
        #[arg(long, value_delimiter = ',')]
        horizons: Vec<f64>,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Horizon C-index under recensoring at quantile thresholds
    Sensitivity {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        /// Comma-separated quantiles of the observed times
        #[arg(long, value_delimiter = ',', default_value = "0.5,0.45,0.35,0.25")]
        quantiles: Vec<f64>,
        /// Comma-separated horizons (default: deciles of the observed times)
        #[arg(long, value_delimiter = ',')]
        horizons: Vec<f64>,
    },
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::SynthValidate { common, function } => {
            let config = common.run_config()?;
            // Without an explicit p both mixture sizes run.
            let ps = if config.p_explicit { vec![config.p] } else { vec![1, 2] };
            let cases = commands::cmd_synth_validate(&config, &function.functions(), &ps, &common.out_dir)?;
            let failed: Vec<String> = cases
                .iter()
                .filter(|c| !c.passed)
                .map(|c| format!("{} p={}", c.function, c.p))
                .collect();
            if failed.is_empty() {
                Ok(())
            } else {
                Err(CliError::acceptance(format!(
                    "relative likelihood gap above {} for {}",
                    config.max_relative_gap,
                    failed.join(", ")
                )))
            }
        }
        Command::Train { common, data } => {
            let config = common.run_config()?;
            let dataset = commands::load_dataset(&data.data, &data.schema)?;
            commands::cmd_train(&config, &dataset, &common.out_dir).map(|_| ())
        }
        Command::Predict {
            model,
            data,
            horizons,
            out_dir,
        } => {
            let dataset = commands::load_dataset(&data.data, &data.schema)?;
            let path = commands::cmd_predict(&model, &dataset, &horizons, &out_dir)?;
            println!("wrote {}", path.display());
            Ok(())
        }
        Command::Sensitivity {
            common,
            data,
            quantiles,
            horizons,
        } => {
            let config = common.run_config()?;
            let dataset = commands::load_dataset(&data.data, &data.schema)?;
            let rows = commands::cmd_sensitivity(&config, &dataset, &quantiles, &horizons, &common.out_dir)?;
            for (q, c) in commands::threshold_averages(&rows) {
                println!("quantile {q}: average C-index {c:.4}");
            }
            Ok(())
        }
    }
}
