pub mod config;
pub mod dataset;
pub mod report;
pub mod synth;

use std::path::PathBuf;

use chrono::{DateTime, Utc};
use thiserror::Error;

use crate::counterfactual::ScenarioError;

pub use config::RunConfig;
pub use dataset::{parse_dataset, read_dataset, validate_dataset, write_dataset, ValidationReport};
pub use report::{emit_report, merge_reports, OutputFormat, Report};
pub use synth::{generate_synthetic, SynthSpec};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("header mismatch: expected `{expected}`, found `{found}`")]
    Header { expected: String, found: String },
    #[error("hour {0} has no meta row")]
    MissingMeta(DateTime<Utc>),
    #[error("hour {0} has more than one meta row")]
    DuplicateMeta(DateTime<Utc>),
    #[error("line {line}: column `{column}` is not a finite number")]
    BadNumber { line: u64, column: &'static str },
    #[error("line {line}: unknown technology `{value}`")]
    UnknownTechnology { line: u64, value: String },
    #[error("line {line}: column `{column}`: {reason}")]
    BadField {
        line: u64,
        column: &'static str,
        reason: String,
    },
    #[error("dataset has no hours")]
    EmptyDataset,
    #[error("hour {hour}: {source}")]
    InvalidHour {
        hour: DateTime<Utc>,
        #[source]
        source: ScenarioError,
    },
    #[error("config: {0}")]
    Config(String),
}

impl IoError {
    pub(crate) fn file(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> IoError {
        let path = path.into();
        move |source| IoError::File { path, source }
    }
}
