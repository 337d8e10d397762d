//! CSV output with the effective configuration as leading comment lines.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::CliError;

/// Shortest representation that parses back to the same value.
pub fn num(v: f64) -> String {
    format!("{v}")
}

pub fn write_table(
    path: &Path,
    comments: &[String],
    header: &[&str],
    rows: &[Vec<String>],
) -> Result<(), CliError> {
    let mut out = BufWriter::new(File::create(path)?);
    for line in comments {
        writeln!(out, "{line}")?;
    }
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(header)?;
    for row in rows {
        writer.write_record(row)?;
    }
    writer.flush()?;
    Ok(())
}

/// Mean and normal-approximation 95% interval across folds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldReport {
    pub values: Vec<f64>,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

impl FoldReport {
    /// `mean ± 1.96 · s / √k` with the sample standard deviation `s`,
    /// clipped to `[0, 1]`.
    pub fn new(values: Vec<f64>) -> Self {
        let k = values.len() as f64;
        let mean = values.iter().sum::<f64>() / k;
        let sd = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
        } else {
            0.0
        };
        let half = 1.96 * sd / k.sqrt();
        Self {
            values,
            mean,
            lower: (mean - half).clamp(0.0, 1.0),
            upper: (mean + half).clamp(0.0, 1.0),
        }
    }

    /// `mean (lower - upper)`, three decimals.
    pub fn display(&self) -> String {
        format!("{:.3} ({:.3} - {:.3})", self.mean, self.lower, self.upper)
    }
}
