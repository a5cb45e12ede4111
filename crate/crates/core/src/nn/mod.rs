//! Matrix-valued MLP vector fields, parameter storage and a minimal
//! reverse-mode tape over the primitives the models use.

mod adam;
pub mod checkpoint;
mod net;
mod params;
mod tape;

use thiserror::Error;

pub use adam::Adam;
pub use net::{vf_forward, vf_init, AffineMap, Matrix, VectorFieldNet, VfShape};
pub use params::{l2_penalty, Gradients, ParamBlock, ParamId, ParamStore};
pub use tape::{softmax, Tape, TapeGrads, Var, CE_CLAMP};

#[derive(Debug, Error)]
pub enum NnError {
    #[error("input has length {actual}, expected {expected}")]
    Dimension { expected: usize, actual: usize },
    #[error("invalid network shape: {0}")]
    Shape(String),
    #[error("non-finite value produced at tape node {node}")]
    NonFinite { node: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
