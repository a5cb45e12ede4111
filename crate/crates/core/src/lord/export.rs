use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::nn::checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};
use crate::nn::{ParamId, ParamStore, Tape, Var};
use crate::ode::SolverConfig;
use crate::path::TaskKind;

use super::{DeNrdeModel, LordConfig, LordError, LordModel, ModelKind, NrdeModel, PreparedSample, Predictor};

/// Which parameter groups a checkpoint carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckpointContent {
    /// Encoder field and its initial-value map.
    Encoder,
    /// Everything needed for prediction; never the decoder.
    Inference,
    Full,
}

/// JSON header stored with every model checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub model: ModelKind,
    pub config: LordConfig,
    pub channels: usize,
    pub task: TaskKind,
    pub content: CheckpointContent,
    /// Caller data such as normalization statistics.
    #[serde(default)]
    pub extra: serde_json::Value,
}

fn sorted(mut ids: Vec<ParamId>) -> Vec<ParamId> {
    ids.sort();
    ids.dedup();
    ids
}

/// Writes the parameter groups selected by `content`.
pub fn write_model_checkpoint<M: Predictor, W: Write>(
    model: &M,
    content: CheckpointContent,
    extra: serde_json::Value,
    out: W,
) -> Result<(), LordError> {
    let ids = match content {
        CheckpointContent::Inference => model.inference_params(),
        CheckpointContent::Full => model.store().ids().collect(),
        CheckpointContent::Encoder => {
            let store = model.store();
            let ids: Vec<ParamId> = ["f.", "phi_e."]
                .iter()
                .flat_map(|p| store.ids().filter(move |&id| store.block(id).name.starts_with(p)))
                .collect();
            if ids.is_empty() {
                return Err(LordError::Checkpoint("model has no encoder".into()));
            }
            ids
        }
    };
    let meta = ModelMeta {
        model: model.kind(),
        config: model.config().clone(),
        channels: model.channels(),
        task: model.task(),
        content,
        extra,
    };
    let meta = serde_json::to_value(&meta).map_err(|e| LordError::Checkpoint(e.to_string()))?;
    let store = model.store();
    let ids = sorted(ids);
    write_checkpoint(out, meta, ids.iter().map(|&id| store.block(id)))?;
    Ok(())
}

/// Any trained model, for code that reads checkpoints.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyModel {
    Lord(LordModel),
    Nrde(NrdeModel),
    DeNrde(DeNrdeModel),
}

impl AnyModel {
    pub fn build(kind: ModelKind, config: LordConfig, channels: usize, task: TaskKind, seed: u64) -> Result<Self, LordError> {
        Ok(match kind {
            ModelKind::Lord => AnyModel::Lord(LordModel::build(config, channels, task, seed)?),
            ModelKind::Nrde { depth } => AnyModel::Nrde(NrdeModel::build(config, depth, channels, task, seed)?),
            ModelKind::DeNrde { depth, ratio } => {
                AnyModel::DeNrde(DeNrdeModel::build(config, depth, ratio, channels, task, seed)?)
            }
        })
    }

    /// Rebuilds the model described by a checkpoint and loads its blocks.
    /// Blocks the checkpoint omits keep their seed-0 initialization.
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<(Self, ModelMeta), LordError> {
        let meta: ModelMeta =
            serde_json::from_value(ckpt.meta.clone()).map_err(|e| LordError::Checkpoint(format!("bad header: {e}")))?;
        let mut model = Self::build(meta.model, meta.config.clone(), meta.channels, meta.task, 0)?;
        ckpt.restore_into(model.store_mut())?;
        Ok((model, meta))
    }

    pub fn read<R: std::io::Read>(input: R) -> Result<(Self, ModelMeta), LordError> {
        Self::from_checkpoint(&read_checkpoint(input)?)
    }

    fn inner(&self) -> &dyn Predictor {
        match self {
            AnyModel::Lord(m) => m,
            AnyModel::Nrde(m) => m,
            AnyModel::DeNrde(m) => m,
        }
    }
}

impl Predictor for AnyModel {
    fn store(&self) -> &ParamStore {
        self.inner().store()
    }

    fn store_mut(&mut self) -> &mut ParamStore {
        match self {
            AnyModel::Lord(m) => &mut m.store,
            AnyModel::Nrde(m) => &mut m.store,
            AnyModel::DeNrde(m) => &mut m.store,
        }
    }

    fn task(&self) -> TaskKind {
        self.inner().task()
    }

    fn kind(&self) -> ModelKind {
        self.inner().kind()
    }

    fn config(&self) -> &LordConfig {
        self.inner().config()
    }

    fn channels(&self) -> usize {
        self.inner().channels()
    }

    fn record_output(&self, tape: &mut Tape<'_>, sample: &PreparedSample, solver: &SolverConfig) -> Result<Var, LordError> {
        self.inner().record_output(tape, sample, solver)
    }

    fn main_params(&self) -> Vec<ParamId> {
        self.inner().main_params()
    }

    fn inference_params(&self) -> Vec<ParamId> {
        self.inner().inference_params()
    }
}
