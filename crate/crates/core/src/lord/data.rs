use rayon::prelude::*;

use crate::path::{logsig_stream, plan_windows, Dataset, LogSignatureStream, Sample, Split, Target};
use crate::tensoralg::LyndonBasis;

use super::LordError;

/// A sample with its log-signature streams precomputed over one window plan.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedSample {
    pub id: String,
    /// Augmented first observation `X(0)`.
    pub x0: Vec<f64>,
    /// Stream at the lower (control) depth.
    pub lo: LogSignatureStream,
    /// Stream at the higher depth, when one was requested.
    pub hi: Option<LogSignatureStream>,
    pub target: Target,
    pub split: Split,
}

impl PreparedSample {
    pub fn hi(&self) -> Result<&LogSignatureStream, LordError> {
        self.hi.as_ref().ok_or(LordError::MissingStream)
    }
}

/// Computes per-window log-signatures at `lo_depth` (and `hi_depth`) for one sample.
pub fn prepare_sample(
    sample: &Sample,
    sub_path_len: usize,
    lo: &LyndonBasis,
    hi: Option<&LyndonBasis>,
) -> Result<PreparedSample, LordError> {
    let plan = plan_windows(&sample.path, sub_path_len)?;
    let lo_stream = logsig_stream(&sample.path, &plan, lo)?;
    let hi_stream = hi.map(|b| logsig_stream(&sample.path, &plan, b)).transpose()?;
    Ok(PreparedSample {
        id: sample.id.clone(),
        x0: sample.path.point(0),
        lo: lo_stream,
        hi: hi_stream,
        target: sample.target,
        split: sample.split,
    })
}

/// Prepares every sample of a dataset, in dataset order.
pub fn prepare_dataset(
    dataset: &Dataset,
    sub_path_len: usize,
    lo_depth: usize,
    hi_depth: Option<usize>,
) -> Result<Vec<PreparedSample>, LordError> {
    let d = dataset.dim();
    let lo = LyndonBasis::new(d, lo_depth);
    let hi = hi_depth.map(|depth| LyndonBasis::new(d, depth));
    dataset
        .samples
        .par_iter()
        .map(|s| {
            prepare_sample(s, sub_path_len, &lo, hi.as_ref())
                .map_err(|e| LordError::Sample { id: s.id.clone(), source: Box::new(e) })
        })
        .collect()
}

pub fn split_of(samples: &[PreparedSample], split: Split) -> Vec<&PreparedSample> {
    samples.iter().filter(|s| s.split == split).collect()
}
