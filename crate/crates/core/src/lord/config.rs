use serde::{Deserialize, Serialize};

use crate::nn::VfShape;
use crate::tensoralg::logsig_dim;

use super::LordError;

/// Width and hidden-layer count of one vector field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetSpec {
    pub width: usize,
    pub hidden_layers: usize,
}

impl NetSpec {
    pub fn new(width: usize, hidden_layers: usize) -> Self {
        Self { width, hidden_layers }
    }

    pub fn shape(self, in_dim: usize, out_rows: usize, out_cols: usize) -> VfShape {
        VfShape { in_dim, width: self.width, hidden_layers: self.hidden_layers, out_rows, out_cols }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainingMode {
    /// Pre-train the autoencoder, then train only the main NRDE with a frozen encoder.
    Lord,
    /// As `Lord`, but the encoder is also updated by the task loss.
    FineTuning,
    /// Pre-train, then update everything with `L_AE + L_TASK`.
    CoTrain,
    /// `CoTrain` without the pre-training phase.
    CoTrainWoPre,
}

impl TrainingMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s.replace('_', "-").as_str() {
            "lord" => Some(Self::Lord),
            "fine-tuning" => Some(Self::FineTuning),
            "co-train" => Some(Self::CoTrain),
            "co-train-wo-pre" => Some(Self::CoTrainWoPre),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Lord => "lord",
            Self::FineTuning => "fine-tuning",
            Self::CoTrain => "co-train",
            Self::CoTrainWoPre => "co-train-wo-pre",
        }
    }

    pub fn pretrains(self) -> bool {
        self != Self::CoTrainWoPre
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LordConfig {
    /// Depth of the log-signature the encoder reads.
    pub d1: usize,
    /// Depth of the log-signature the decoder reconstructs.
    pub d2: usize,
    /// Embedding size; defaults to `logsig_dim(d, d1)`.
    pub embed_dim: Option<usize>,
    /// Size of the main NRDE state `z`.
    pub hidden_dim: usize,
    pub f: NetSpec,
    pub g: NetSpec,
    pub o: NetSpec,
    pub c_ae: f64,
    pub c_e: f64,
    pub c_task: f64,
    pub max_iter_ae: usize,
    pub max_iter_task: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub mode: TrainingMode,
    /// Weight of `L_AE` in the co-training objective.
    pub co_train_ae_weight: f64,
    /// Validate every this many main-phase iterations (and after the last).
    pub val_every: usize,
}

impl Default for LordConfig {
    fn default() -> Self {
        Self {
            d1: 1,
            d2: 2,
            embed_dim: None,
            hidden_dim: 16,
            f: NetSpec::new(32, 2),
            g: NetSpec::new(32, 2),
            o: NetSpec::new(32, 2),
            c_ae: 1e-6,
            c_e: 0.0,
            c_task: 1e-6,
            max_iter_ae: 400,
            max_iter_task: 400,
            lr: 1e-3,
            batch_size: 32,
            mode: TrainingMode::Lord,
            co_train_ae_weight: 1.0,
            val_every: 1,
        }
    }
}

impl LordConfig {
    pub fn validate(&self) -> Result<(), LordError> {
        let bad = |m: String| Err(LordError::Config(m));
        if !(1 <= self.d1 && self.d1 < self.d2 && self.d2 <= 4) {
            return bad(format!("depths must satisfy 1 <= d1 < d2 <= 4, got d1={} d2={}", self.d1, self.d2));
        }
        for (name, c) in [("c_ae", self.c_ae), ("c_e", self.c_e), ("c_task", self.c_task), ("co_train_ae_weight", self.co_train_ae_weight)] {
            if !(c >= 0.0 && c.is_finite()) {
                return bad(format!("{name} must be a non-negative number, got {c}"));
            }
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if self.batch_size == 0 || self.val_every == 0 || self.hidden_dim == 0 {
            return bad("batch_size, val_every and hidden_dim must be positive".into());
        }
        if self.embed_dim == Some(0) {
            return bad("embed_dim must be positive".into());
        }
        for (name, n) in [("f", self.f), ("g", self.g), ("o", self.o)] {
            if n.width == 0 || n.hidden_layers == 0 {
                return bad(format!("{name}: width and hidden_layers must be positive"));
            }
        }
        Ok(())
    }

    pub fn embed_dim_for(&self, channels: usize) -> usize {
        self.embed_dim.unwrap_or_else(|| logsig_dim(channels, self.d1))
    }
}
