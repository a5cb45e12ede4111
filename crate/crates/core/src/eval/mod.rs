//! Classification and regression metrics, per-seed aggregation and a PCA
//! export for comparing log-signature and embedding distributions.

mod metrics;
mod pca;

use thiserror::Error;

pub use metrics::{
    accuracy, argmax, classification_metrics, regression_metrics, roc_auc_binary,
    ClassificationMetrics, MetricReport, MetricSeries, RegressionMetrics,
};
pub use pca::{pca_export, PcaExport, PointSource};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("no predictions to score")]
    Empty,
    #[error("{labels} labels but {predictions} predictions")]
    LengthMismatch { labels: usize, predictions: usize },
    #[error("probability row {row} sums to {sum}, expected 1")]
    ProbabilityRow { row: usize, sum: f64 },
    #[error("label {label} outside the {classes} predicted classes")]
    LabelRange { label: usize, classes: usize },
    #[error("regression metrics need at least 2 values, got {0}")]
    TooFewValues(usize),
    #[error("PCA needs at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("rank-0 covariance")]
    RankZero,
}
