use std::fmt;

use super::tensor::word_index;
use super::{TensorError, TruncatedTensor};

/// A word over the zero-based alphabet `{0, .., d-1}`.
pub type Word = Vec<usize>;

/// Lyndon words of length at most `depth` over `channels` letters, together
/// with the tensor expansion of each word's standard bracketing.
///
/// Words are ordered by length, then lexicographically. The expansion of the
/// bracket of a Lyndon word `w` is homogeneous of degree `|w|` and has the
/// form `w + (lexicographically larger words)`, so each level gives a unit
/// lower-triangular system for recovering Lyndon coordinates.
#[derive(Clone)]
pub struct LyndonBasis {
    channels: usize,
    depth: usize,
    words: Vec<Word>,
    /// Dense level-`|w|` expansion of each bracketed word.
    expansions: Vec<Vec<f64>>,
    /// Per level: range into `words` holding the words of that length.
    level_ranges: Vec<std::ops::Range<usize>>,
    /// Per level: entry `[i][j]` is the coefficient of word `i` in the expansion of word `j`.
    triangular: Vec<Vec<Vec<f64>>>,
}

impl LyndonBasis {
    pub fn new(channels: usize, depth: usize) -> Self {
        assert!(channels >= 1 && depth >= 1, "channels and depth must be positive");
        let mut words = lyndon_words(channels, depth);
        words.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));

        let expansions: Vec<Vec<f64>> =
            words.iter().map(|w| bracket_expansion(w, channels)).collect();

        let mut level_ranges = Vec::with_capacity(depth);
        let mut start = 0;
        for n in 1..=depth {
            let end = start + words[start..].iter().take_while(|w| w.len() == n).count();
            level_ranges.push(start..end);
            start = end;
        }

        let triangular = level_ranges
            .iter()
            .map(|range| {
                range
                    .clone()
                    .map(|i| {
                        let idx = word_index(&words[i], channels);
                        range.clone().map(|j| expansions[j][idx]).collect()
                    })
                    .collect()
            })
            .collect();

        Self { channels, depth, words, expansions, level_ranges, triangular }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn words(&self) -> &[Word] {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Dense expansion of the `i`-th bracketed basis element at level `|w_i|`.
    pub fn expansion(&self, i: usize) -> &[f64] {
        &self.expansions[i]
    }

    /// Human-readable labels with one-based letters, e.g. `"1"`, `"1_2"`.
    pub fn labels(&self) -> Vec<String> {
        self.words
            .iter()
            .map(|w| w.iter().map(|l| (l + 1).to_string()).collect::<Vec<_>>().join("_"))
            .collect()
    }

    /// Coordinates of a Lie element (zero scalar term) in this basis.
    ///
    /// Solves each level's unit triangular system by forward substitution.
    /// Components of `tensor` outside the span of the basis are ignored.
    pub fn coordinates(&self, tensor: &TruncatedTensor) -> Result<Vec<f64>, TensorError> {
        if tensor.channels() != self.channels || tensor.depth() != self.depth {
            return Err(TensorError::ShapeMismatch {
                left: (self.channels, self.depth),
                right: (tensor.channels(), tensor.depth()),
            });
        }
        let mut coeffs = vec![0.0; self.words.len()];
        for (lvl, range) in self.level_ranges.iter().enumerate() {
            let level = tensor.level(lvl + 1);
            let system = &self.triangular[lvl];
            for (i, wi) in range.clone().enumerate() {
                let mut rhs = level[word_index(&self.words[wi], self.channels)];
                for j in 0..i {
                    rhs -= system[i][j] * coeffs[range.start + j];
                }
                let pivot = system[i][i];
                if pivot.abs() < 1e-12 {
                    return Err(TensorError::SingularSolve { word: self.words[wi].clone() });
                }
                coeffs[wi] = rhs / pivot;
            }
        }
        Ok(coeffs)
    }

    /// The Lie element with the given Lyndon coordinates.
    pub fn to_tensor(&self, coeffs: &[f64]) -> TruncatedTensor {
        assert_eq!(coeffs.len(), self.words.len());
        let mut t = TruncatedTensor::zero(self.channels, self.depth);
        for (i, (w, &c)) in self.words.iter().zip(coeffs).enumerate() {
            let level = t.level_mut(w.len());
            for (x, e) in level.iter_mut().zip(&self.expansions[i]) {
                *x += c * e;
            }
        }
        t
    }
}

impl fmt::Debug for LyndonBasis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LyndonBasis")
            .field("channels", &self.channels)
            .field("depth", &self.depth)
            .field("words", &self.labels())
            .finish()
    }
}

/// All Lyndon words of length `1..=max_len` over `channels` letters, in
/// lexicographic order (Duval's generation algorithm).
pub fn lyndon_words(channels: usize, max_len: usize) -> Vec<Word> {
    let mut out = Vec::new();
    let mut w: Vec<usize> = vec![0];
    while !w.is_empty() {
        out.push(w.clone());
        let m = w.len();
        while w.len() < max_len {
            let next = w[w.len() - m];
            w.push(next);
        }
        while let Some(&last) = w.last() {
            if last == channels - 1 {
                w.pop();
            } else {
                break;
            }
        }
        if let Some(last) = w.last_mut() {
            *last += 1;
        }
    }
    out
}

/// True when `word` is strictly smaller than each of its proper rotations.
pub fn is_lyndon(word: &[usize]) -> bool {
    let n = word.len();
    if n == 0 {
        return false;
    }
    (1..n).all(|k| {
        let rotated: Vec<usize> = word[k..].iter().chain(&word[..k]).copied().collect();
        word < rotated.as_slice()
    })
}

/// Standard factorization `w = uv` with `v` the longest proper Lyndon suffix.
pub fn standard_factorization(word: &[usize]) -> Option<(&[usize], &[usize])> {
    if word.len() < 2 {
        return None;
    }
    (1..word.len())
        .find(|&k| is_lyndon(&word[k..]))
        .map(|k| (&word[..k], &word[k..]))
}

/// Dense degree-`|w|` tensor expansion of the standard bracketing of `w`.
fn bracket_expansion(word: &[usize], channels: usize) -> Vec<f64> {
    match standard_factorization(word) {
        None => {
            let mut v = vec![0.0; channels];
            v[word[0]] = 1.0;
            v
        }
        Some((u, v)) => {
            let pu = bracket_expansion(u, channels);
            let pv = bracket_expansion(v, channels);
            // [P(u), P(v)] = P(u) P(v) - P(v) P(u)
            let mut out = vec![0.0; pu.len() * pv.len()];
            for (i, &a) in pu.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (j, &b) in pv.iter().enumerate() {
                    out[i * pv.len() + j] += a * b;
                }
            }
            for (j, &b) in pv.iter().enumerate() {
                if b == 0.0 {
                    continue;
                }
                for (i, &a) in pu.iter().enumerate() {
                    out[j * pu.len() + i] -= b * a;
                }
            }
            out
        }
    }
}

fn mobius(mut n: usize) -> i64 {
    let mut result = 1;
    let mut p = 2;
    while p * p <= n {
        if n % p == 0 {
            n /= p;
            if n % p == 0 {
                return 0;
            }
            result = -result;
        }
        p += 1;
    }
    if n > 1 {
        result = -result;
    }
    result
}

/// Number of Lyndon words of length exactly `n` over `channels` letters.
pub fn witt_count(channels: usize, n: usize) -> usize {
    let total: i64 = (1..=n)
        .filter(|k| n % k == 0)
        .map(|k| mobius(k) * (channels as i64).pow((n / k) as u32))
        .sum();
    (total / n as i64) as usize
}

/// Dimension of the depth-`depth` truncated free Lie algebra on `channels` generators.
pub fn logsig_dim(channels: usize, depth: usize) -> usize {
    assert!(channels >= 1 && depth >= 1, "channels and depth must be positive");
    (1..=depth).map(|n| witt_count(channels, n)).sum()
}
