use super::PathError;

/// Timestamped multichannel observations. The augmented path appends the
/// timestamp as the last channel, so `dim() == raw_channels() + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesPath {
    times: Vec<f64>,
    values: Vec<Vec<f64>>,
}

impl TimeSeriesPath {
    /// Requires strictly increasing times starting at zero and finite values
    /// of uniform width.
    pub fn new(times: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self, PathError> {
        if times.len() != values.len() {
            return Err(PathError::LengthMismatch { times: times.len(), values: values.len() });
        }
        if times.is_empty() {
            return Err(PathError::Empty);
        }
        if times[0] != 0.0 {
            return Err(PathError::NonZeroStart(times[0]));
        }
        if let Some(i) = times.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(PathError::NonMonotone { index: i + 1 });
        }
        let width = values[0].len();
        for (i, row) in values.iter().enumerate() {
            if row.len() != width {
                return Err(PathError::RowWidth { index: i, expected: width, actual: row.len() });
            }
            if row.iter().any(|x| !x.is_finite()) || !times[i].is_finite() {
                return Err(PathError::NonFinite { index: i });
            }
        }
        Ok(Self { times, values })
    }

    /// Shifts timestamps so that the first observation sits at `t = 0`.
    pub fn from_unshifted(times: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self, PathError> {
        let t0 = times.first().copied().unwrap_or(0.0);
        Self::new(times.into_iter().map(|t| t - t0).collect(), values)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.values
    }

    pub(crate) fn times_mut(&mut self) -> &mut [f64] {
        &mut self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn raw_channels(&self) -> usize {
        self.values[0].len()
    }

    /// Augmented dimension, raw channels plus time.
    pub fn dim(&self) -> usize {
        self.raw_channels() + 1
    }

    pub fn end_time(&self) -> f64 {
        *self.times.last().expect("non-empty path")
    }

    /// `X(t_i) = (x_i, t_i)`.
    pub fn point(&self, i: usize) -> Vec<f64> {
        let mut p = self.values[i].clone();
        p.push(self.times[i]);
        p
    }

    /// Augmented observations `from..=to`.
    pub fn points(&self, from: usize, to: usize) -> Vec<Vec<f64>> {
        (from..=to).map(|i| self.point(i)).collect()
    }
}
