use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// A data row rejected while loading, with the reason.
#[derive(Debug, Clone, PartialEq)]
pub struct RowIssue {
    /// 1-based line number in the source file (the header is line 1).
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("batch of {0} rows is too small for batch normalization in training mode (need at least 2)")]
    BatchTooSmall(usize),

    #[error("training diverged: non-finite values in {layer}")]
    NonFiniteActivation { layer: String },

    #[error("training diverged at epoch {epoch}: {detail}")]
    Diverged { epoch: usize, detail: String },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("concordance index undefined: no comparable pairs")]
    NoComparablePairs,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dataset too small: {0}")]
    DatasetTooSmall(String),

    #[error("empty data file: {}", .0.display())]
    EmptyFile(PathBuf),

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("line {line}, column `{column}`: cannot parse {value:?}")]
    UnparsableCell {
        line: usize,
        column: String,
        value: String,
    },

    #[error("{} rejected rows: {}", .0.len(), format_rows(.0))]
    RejectedRows(Vec<RowIssue>),

    #[error("feature mismatch: {0}")]
    SchemaMismatch(String),

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("toml: {0}")]
    Toml(#[from] toml::de::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

fn format_rows(rows: &[RowIssue]) -> String {
    rows.iter()
        .map(|r| format!("line {} ({})", r.line, r.reason))
        .collect::<Vec<_>>()
        .join(", ")
}
