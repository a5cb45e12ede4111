//! The LORD model: an NRDE autoencoder over low-depth log-signatures whose
//! frozen encoder drives a main NRDE, plus the NRDE and DE-NRDE baselines.

mod config;
mod data;
mod export;
mod model;
mod train;

use thiserror::Error;

use crate::eval::EvalError;
use crate::nn::NnError;
use crate::ode::OdeError;
use crate::path::PathError;
use crate::tensoralg::TensorError;

pub use config::{LordConfig, NetSpec, TrainingMode};
pub use export::{write_model_checkpoint, AnyModel, CheckpointContent, ModelMeta};
pub use data::{prepare_dataset, prepare_sample, split_of, PreparedSample};
pub use model::{
    compressed_dim, recon_divisor, record_task_sample, AutoencoderRecord, DeNrdeModel, LordModel,
    MainNrde, ModelKind, NrdeModel, Predictor,
};
pub use train::{
    batch_gradients, evaluate, predict, pretrain, run_lord, train_main, train_supervised,
    validation_metric, Phase, ReportRow, TrainReport,
};

#[derive(Debug, Error)]
pub enum LordError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{what}: expected {expected}, got {actual}")]
    Dimension { what: &'static str, expected: usize, actual: usize },
    #[error("target does not match the task kind")]
    TargetKind,
    #[error("sample has no high-depth log-signature stream")]
    MissingStream,
    #[error("the {0} split is empty")]
    EmptySplit(&'static str),
    #[error("sample {id}: {source}")]
    Sample { id: String, source: Box<LordError> },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Path(#[from] PathError),
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

impl From<TensorError> for LordError {
    fn from(e: TensorError) -> Self {
        LordError::Path(PathError::Tensor(e))
    }
}

impl LordError {
    /// True when the error stems from a non-finite value during integration or training.
    pub fn is_divergence(&self) -> bool {
        match self {
            LordError::Ode(OdeError::Divergence { .. }) | LordError::Nn(NnError::NonFinite { .. }) => true,
            LordError::Ode(OdeError::Nn(NnError::NonFinite { .. })) => true,
            LordError::Sample { source, .. } => source.is_divergence(),
            _ => false,
        }
    }
}

#[cfg(test)]
mod tests;
