use crate::tensoralg::{path_logsignature, LogSignature, LyndonBasis};

use super::{PathError, TimeSeriesPath};

/// Consecutive observation windows of `sub_path_len` observations sharing one
/// boundary observation with their neighbours.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowPlan {
    sub_path_len: usize,
    /// Inclusive observation index ranges.
    windows: Vec<(usize, usize)>,
    /// Window edges in time units, `r_0 = 0 .. r_W = T`.
    boundaries: Vec<f64>,
}

impl WindowPlan {
    pub fn sub_path_len(&self) -> usize {
        self.sub_path_len
    }

    pub fn windows(&self) -> &[(usize, usize)] {
        &self.windows
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }
}

/// Tiles the observation index range with windows of `sub_path_len`
/// observations; a shorter final window keeps any remainder.
pub fn plan_windows(path: &TimeSeriesPath, sub_path_len: usize) -> Result<WindowPlan, PathError> {
    if sub_path_len < 2 {
        return Err(PathError::SubPathTooShort(sub_path_len));
    }
    if path.len() < 2 {
        return Err(PathError::TooFewObservations(path.len()));
    }
    let last = path.len() - 1;
    let step = sub_path_len - 1;
    let mut windows = Vec::with_capacity(last.div_ceil(step));
    let mut start = 0;
    while start < last {
        let end = (start + step).min(last);
        windows.push((start, end));
        start = end;
    }
    let times = path.times();
    let mut boundaries = Vec::with_capacity(windows.len() + 1);
    boundaries.push(times[0]);
    boundaries.extend(windows.iter().map(|&(_, e)| times[e]));
    Ok(WindowPlan { sub_path_len, windows, boundaries })
}

/// Per-window log-signatures of a path, the input stream of a rough
/// differential equation.
#[derive(Debug, Clone, PartialEq)]
pub struct LogSignatureStream {
    depth: usize,
    entries: Vec<LogSignature>,
    boundaries: Vec<f64>,
}

impl LogSignatureStream {
    /// Builds a stream from precomputed entries and window edges.
    pub fn new(
        depth: usize,
        entries: Vec<LogSignature>,
        boundaries: Vec<f64>,
    ) -> Result<Self, PathError> {
        if entries.is_empty() || boundaries.len() != entries.len() + 1 {
            return Err(PathError::StreamShape {
                entries: entries.len(),
                boundaries: boundaries.len(),
            });
        }
        if let Some(i) = boundaries.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(PathError::NonMonotone { index: i + 1 });
        }
        let width = entries[0].len();
        if entries.iter().any(|e| e.len() != width) {
            return Err(PathError::StreamShape {
                entries: entries.len(),
                boundaries: boundaries.len(),
            });
        }
        Ok(Self { depth, entries, boundaries })
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn entries(&self) -> &[LogSignature] {
        &self.entries
    }

    pub fn entry(&self, i: usize) -> &[f64] {
        &self.entries[i].coeffs
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Length of each log-signature entry.
    pub fn width(&self) -> usize {
        self.entries[0].len()
    }

    pub fn duration(&self, i: usize) -> f64 {
        self.boundaries[i + 1] - self.boundaries[i]
    }

    pub fn durations(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.duration(i)).collect()
    }

    pub fn end_time(&self) -> f64 {
        *self.boundaries.last().expect("non-empty stream")
    }

    /// Index of the window containing `t`; `t = T` maps to the last window.
    pub fn window_at(&self, t: f64) -> Result<usize, PathError> {
        let end = self.end_time();
        if !(t >= self.boundaries[0] && t <= end) {
            return Err(PathError::TimeOutOfRange { t, end });
        }
        let idx = self.boundaries.partition_point(|&r| r <= t);
        Ok(idx.saturating_sub(1).min(self.len() - 1))
    }

    /// `LogSig_i / (r_{i+1} - r_i)` for the window containing `t`.
    pub fn control_derivative(&self, t: f64) -> Result<Vec<f64>, PathError> {
        let i = self.window_at(t)?;
        let scale = 1.0 / self.duration(i);
        Ok(self.entry(i).iter().map(|x| x * scale).collect())
    }
}

/// Log-signature of every window of `plan`, time channel included.
pub fn logsig_stream(
    path: &TimeSeriesPath,
    plan: &WindowPlan,
    basis: &LyndonBasis,
) -> Result<LogSignatureStream, PathError> {
    if plan.windows.last().map(|w| w.1) != Some(path.len() - 1) {
        return Err(PathError::PlanMismatch);
    }
    let entries = plan
        .windows
        .iter()
        .map(|&(a, b)| path_logsignature(&path.points(a, b), basis))
        .collect::<Result<Vec<_>, _>>()?;
    LogSignatureStream::new(basis.depth(), entries, plan.boundaries.clone())
}
