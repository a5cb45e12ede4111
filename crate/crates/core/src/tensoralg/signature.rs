use super::{LyndonBasis, TensorError, TruncatedTensor};

/// Lyndon coordinates of a log-signature.
#[derive(Debug, Clone, PartialEq)]
pub struct LogSignature {
    pub channels: usize,
    pub depth: usize,
    pub coeffs: Vec<f64>,
}

impl LogSignature {
    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }
}

/// Signature of a single linear segment with increment `delta`: `exp(delta)`.
///
/// Level `k` is `delta^(x)k / k!`, built directly rather than through the series.
pub fn segment_signature(delta: &[f64], depth: usize) -> TruncatedTensor {
    let d = delta.len();
    let mut t = TruncatedTensor::identity(d, depth);
    t.level_mut(1).copy_from_slice(delta);
    for k in 2..=depth {
        let prev = t.level(k - 1).to_vec();
        let scale = 1.0 / k as f64;
        let cur = t.level_mut(k);
        for (i, &p) in prev.iter().enumerate() {
            for (j, &x) in delta.iter().enumerate() {
                cur[i * d + j] = p * x * scale;
            }
        }
    }
    t
}

fn check_points(points: &[Vec<f64>]) -> Result<usize, TensorError> {
    if points.len() < 2 {
        return Err(TensorError::TooFewPoints(points.len()));
    }
    let d = points[0].len();
    if d == 0 {
        return Err(TensorError::EmptyShape);
    }
    if let Some(bad) = points.iter().find(|p| p.len() != d) {
        return Err(TensorError::PointDimension { expected: d, actual: bad.len() });
    }
    Ok(d)
}

/// Signature of the piecewise-linear path through `points`, combined segment
/// by segment with Chen's identity.
pub fn path_signature(points: &[Vec<f64>], depth: usize) -> Result<TruncatedTensor, TensorError> {
    let d = check_points(points)?;
    let mut sig = TruncatedTensor::identity(d, depth);
    let mut delta = vec![0.0; d];
    for pair in points.windows(2) {
        for ((dx, a), b) in delta.iter_mut().zip(&pair[0]).zip(&pair[1]) {
            *dx = b - a;
        }
        sig = sig.mul(&segment_signature(&delta, depth))?;
    }
    Ok(sig)
}

/// Log-signature of the piecewise-linear path through `points` in the
/// coordinates of `basis`.
pub fn path_logsignature(
    points: &[Vec<f64>],
    basis: &LyndonBasis,
) -> Result<LogSignature, TensorError> {
    let d = check_points(points)?;
    if d != basis.channels() {
        return Err(TensorError::PointDimension { expected: basis.channels(), actual: d });
    }
    let log = path_signature(points, basis.depth())?.log()?;
    Ok(LogSignature { channels: d, depth: basis.depth(), coeffs: basis.coordinates(&log)? })
}
