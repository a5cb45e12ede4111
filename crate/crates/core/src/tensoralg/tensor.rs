use std::fmt;

use super::TensorError;

/// An element of the tensor algebra over `R^d`, truncated at `depth`.
///
/// Level `k` (for `k = 1..=depth`) is stored densely with `d^k` entries; the
/// word `(i_1, ..., i_k)` (zero-based letters) lives at index
/// `i_1 d^(k-1) + ... + i_k`. Level zero is the scalar term.
#[derive(Clone, PartialEq)]
pub struct TruncatedTensor {
    channels: usize,
    depth: usize,
    scalar: f64,
    levels: Vec<Vec<f64>>,
}

impl TruncatedTensor {
    /// The zero element.
    pub fn zero(channels: usize, depth: usize) -> Self {
        assert!(channels >= 1, "channel count must be positive");
        assert!(depth >= 1, "depth must be positive");
        let levels = (1..=depth).map(|k| vec![0.0; channels.pow(k as u32)]).collect();
        Self { channels, depth, scalar: 0.0, levels }
    }

    /// The unit element `1`.
    pub fn identity(channels: usize, depth: usize) -> Self {
        let mut t = Self::zero(channels, depth);
        t.scalar = 1.0;
        t
    }

    /// `scalar + v` where `v` sits in level one.
    pub fn from_vector(scalar: f64, v: &[f64], depth: usize) -> Self {
        let mut t = Self::zero(v.len(), depth);
        t.scalar = scalar;
        t.levels[0].copy_from_slice(v);
        t
    }

    /// Builds a tensor from explicit levels, validating their lengths.
    pub fn from_levels(
        channels: usize,
        scalar: f64,
        levels: Vec<Vec<f64>>,
    ) -> Result<Self, TensorError> {
        if channels == 0 || levels.is_empty() {
            return Err(TensorError::EmptyShape);
        }
        for (k, level) in levels.iter().enumerate() {
            let expected = channels.pow(k as u32 + 1);
            if level.len() != expected {
                return Err(TensorError::LevelLength {
                    level: k + 1,
                    expected,
                    actual: level.len(),
                });
            }
        }
        Ok(Self { channels, depth: levels.len(), scalar, levels })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn scalar(&self) -> f64 {
        self.scalar
    }

    pub fn set_scalar(&mut self, value: f64) {
        self.scalar = value;
    }

    /// Level `k` coefficients, `1 <= k <= depth`.
    pub fn level(&self, k: usize) -> &[f64] {
        &self.levels[k - 1]
    }

    pub fn level_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.levels[k - 1]
    }

    /// Coefficient of a word of zero-based letters. The empty word is the scalar term.
    pub fn coeff(&self, word: &[usize]) -> f64 {
        if word.is_empty() {
            return self.scalar;
        }
        self.levels[word.len() - 1][word_index(word, self.channels)]
    }

    fn check_shape(&self, other: &Self) -> Result<(), TensorError> {
        if self.channels != other.channels || self.depth != other.depth {
            return Err(TensorError::ShapeMismatch {
                left: (self.channels, self.depth),
                right: (other.channels, other.depth),
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self, TensorError> {
        self.check_shape(other)?;
        let mut out = self.clone();
        out.scalar += other.scalar;
        for (a, b) in out.levels.iter_mut().zip(&other.levels) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self, TensorError> {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.scalar *= factor;
        for level in &mut out.levels {
            level.iter_mut().for_each(|x| *x *= factor);
        }
        out
    }

    /// Truncated tensor product: level `k` of the result is
    /// `sum_{j=0..k} a_j (x) b_{k-j}`.
    pub fn mul(&self, other: &Self) -> Result<Self, TensorError> {
        self.check_shape(other)?;
        let d = self.channels;
        let mut out = Self::zero(d, self.depth);
        out.scalar = self.scalar * other.scalar;
        for k in 1..=self.depth {
            let target = &mut out.levels[k - 1];
            // j = 0 and j = k terms are scalar multiples.
            if self.scalar != 0.0 {
                for (t, b) in target.iter_mut().zip(&other.levels[k - 1]) {
                    *t += self.scalar * b;
                }
            }
            if other.scalar != 0.0 {
                for (t, a) in target.iter_mut().zip(&self.levels[k - 1]) {
                    *t += a * other.scalar;
                }
            }
            for j in 1..k {
                let a = &self.levels[j - 1];
                let b = &other.levels[k - j - 1];
                let stride = b.len();
                for (ai, &av) in a.iter().enumerate() {
                    if av == 0.0 {
                        continue;
                    }
                    let row = &mut target[ai * stride..(ai + 1) * stride];
                    for (t, &bv) in row.iter_mut().zip(b) {
                        *t += av * bv;
                    }
                }
            }
        }
        Ok(out)
    }

    /// Truncated exponential `sum_k x^k / k!`. Requires a zero scalar term.
    pub fn exp(&self) -> Result<Self, TensorError> {
        if self.scalar != 0.0 {
            return Err(TensorError::ScalarTerm { expected: 0.0, actual: self.scalar });
        }
        let mut result = Self::identity(self.channels, self.depth);
        let mut term = Self::identity(self.channels, self.depth);
        for k in 1..=self.depth {
            term = term.mul(self)?.scale(1.0 / k as f64);
            result = result.add(&term)?;
        }
        Ok(result)
    }

    /// Truncated logarithm `sum_k (-1)^(k+1) (x - 1)^k / k`. Requires a unit scalar term.
    pub fn log(&self) -> Result<Self, TensorError> {
        if self.scalar != 1.0 {
            return Err(TensorError::ScalarTerm { expected: 1.0, actual: self.scalar });
        }
        let mut y = self.clone();
        y.scalar = 0.0;
        let mut result = Self::zero(self.channels, self.depth);
        let mut power = Self::identity(self.channels, self.depth);
        for k in 1..=self.depth {
            power = power.mul(&y)?;
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            result = result.add(&power.scale(sign / k as f64))?;
        }
        Ok(result)
    }

    /// Largest absolute coefficient difference across all levels.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64, TensorError> {
        self.check_shape(other)?;
        let mut m = (self.scalar - other.scalar).abs();
        for (a, b) in self.levels.iter().zip(&other.levels) {
            for (x, y) in a.iter().zip(b) {
                m = m.max((x - y).abs());
            }
        }
        Ok(m)
    }

    /// Largest absolute coefficient.
    pub fn max_abs(&self) -> f64 {
        self.levels
            .iter()
            .flatten()
            .fold(self.scalar.abs(), |m, x| m.max(x.abs()))
    }
}

impl fmt::Debug for TruncatedTensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TruncatedTensor")
            .field("channels", &self.channels)
            .field("depth", &self.depth)
            .field("scalar", &self.scalar)
            .field("levels", &self.levels)
            .finish()
    }
}

/// Dense index of a word of zero-based letters within its level.
pub fn word_index(word: &[usize], channels: usize) -> usize {
    word.iter().fold(0, |acc, &letter| acc * channels + letter)
}
