//! Truncated tensor algebra, Lyndon bases and log-signatures of
//! piecewise-linear paths.

mod lyndon;
mod signature;
mod tensor;

use thiserror::Error;

pub use lyndon::{
    is_lyndon, logsig_dim, lyndon_words, standard_factorization, witt_count, LyndonBasis, Word,
};
pub use signature::{path_logsignature, path_signature, segment_signature, LogSignature};
pub use tensor::{word_index, TruncatedTensor};

#[derive(Debug, Error, PartialEq)]
pub enum TensorError {
    #[error("shape mismatch: (d={}, D={}) vs (d={}, D={})", left.0, left.1, right.0, right.1)]
    ShapeMismatch { left: (usize, usize), right: (usize, usize) },
    #[error("expected scalar term {expected}, found {actual}")]
    ScalarTerm { expected: f64, actual: f64 },
    #[error("level {level} has {actual} entries, expected {expected}")]
    LevelLength { level: usize, expected: usize, actual: usize },
    #[error("channel count and depth must be positive")]
    EmptyShape,
    #[error("a path needs at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("point has dimension {actual}, expected {expected}")]
    PointDimension { expected: usize, actual: usize },
    #[error("singular Lyndon solve at word {word:?}")]
    SingularSolve { word: Word },
}
