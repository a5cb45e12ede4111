//! Time-series ingestion, sub-path windowing and log-signature streams.

mod dataset;
mod series;
mod window;

use std::path::PathBuf;

use thiserror::Error;

use crate::tensoralg::TensorError;

pub use dataset::{
    load_dataset, normalize, read_sample, seeded_split, Dataset, LoadOptions, Normalization,
    Sample, Split, Target, TaskHint, TaskKind,
};
pub use series::TimeSeriesPath;
pub use window::{logsig_stream, plan_windows, LogSignatureStream, WindowPlan};

#[derive(Debug, Error)]
pub enum PathError {
    #[error("{times} timestamps but {values} observations")]
    LengthMismatch { times: usize, values: usize },
    #[error("empty path or dataset")]
    Empty,
    #[error("first timestamp must be 0, found {0}")]
    NonZeroStart(f64),
    #[error("non-monotone timestamps at observation {index}")]
    NonMonotone { index: usize },
    #[error("observation {index} has {actual} channels, expected {expected}")]
    RowWidth { index: usize, expected: usize, actual: usize },
    #[error("non-finite value at observation {index}")]
    NonFinite { index: usize },
    #[error("sub-path length must be at least 2, got {0}")]
    SubPathTooShort(usize),
    #[error("a path needs at least 2 observations, got {0}")]
    TooFewObservations(usize),
    #[error("window plan does not cover the path")]
    PlanMismatch,
    #[error("stream with {entries} entries and {boundaries} boundaries")]
    StreamShape { entries: usize, boundaries: usize },
    #[error("time {t} outside [0, {end}]")]
    TimeOutOfRange { t: f64, end: f64 },
    #[error("{}:{line}: {message}", file.display())]
    Malformed { file: PathBuf, line: usize, message: String },
    #[error("{}: no entry for sample id {id:?}", file.display())]
    MissingLabel { file: PathBuf, id: String },
    #[error("{}: {source}", file.display())]
    Io { file: PathBuf, source: std::io::Error },
    #[error("{}: {source}", file.display())]
    InFile { file: PathBuf, source: Box<PathError> },
    #[error("the {0} split is empty")]
    EmptySplit(&'static str),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

impl PartialEq for PathError {
    fn eq(&self, other: &Self) -> bool {
        self.to_string() == other.to_string()
    }
}
