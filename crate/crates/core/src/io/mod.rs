//! Run configuration, file formats and the tracking pipeline.

mod config;
mod files;
mod run;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use config::{load_config, FilterSettings, InputFiles, Mode, RunConfig};
pub use files::{
    ingest_detections, pad_frames, read_estimates, read_metrics, read_truth, write_atomic,
    write_detections, write_estimates, write_json, write_metrics, write_truth, DetectionFormat,
    EstimateRow, DETECTION_HEADER, ESTIMATE_HEADER, METRIC_HEADER, TRUTH_HEADER,
};
pub use run::{
    evaluate, evaluate_files, run_tracking, track_frames, Evaluation, MethodOutput, MethodSummary,
    RunSummary,
};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{}: {source}", path.display())]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}{}: {message}", path.display(), line.map(|l| format!(", line {l}")).unwrap_or_default())]
    Csv {
        path: PathBuf,
        line: Option<u64>,
        message: String,
    },
    #[error("{}: {message}", path.display())]
    Config { path: PathBuf, message: String },
    #[error("{0}")]
    Invalid(String),
    #[error("line {line}: {message}")]
    Line { line: u64, message: String },
}

impl IoError {
    pub(crate) fn file(path: &Path, source: std::io::Error) -> Self {
        IoError::File {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn at_line(self, line: u64) -> Self {
        match self {
            IoError::Invalid(message) => IoError::Line { line, message },
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, IoError>;
