use std::fmt::Write as _;

use nalgebra::{DMatrix, SymmetricEigen};

use super::EvalError;

/// Which family a projected point comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PointSource {
    LogsigD1,
    LogsigD2,
    /// Embedding increments `e(r_{i+1}) - e(r_i)`.
    De,
}

impl PointSource {
    pub fn as_str(self) -> &'static str {
        match self {
            PointSource::LogsigD1 => "logsig_D1",
            PointSource::LogsigD2 => "logsig_D2",
            PointSource::De => "de",
        }
    }
}

/// Top-2 principal components of a tagged point cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaExport {
    /// Unit directions, largest eigenvalue first.
    pub directions: [Vec<f64>; 2],
    /// Covariance eigenvalues along each direction.
    pub eigenvalues: [f64; 2],
    /// Share of the total variance along each direction.
    pub explained_variance_ratio: [f64; 2],
    pub projections: Vec<(PointSource, [f64; 2])>,
}

impl PcaExport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("source,pc1,pc2\n");
        for (src, [a, b]) in &self.projections {
            writeln!(out, "{},{},{}", src.as_str(), a, b).unwrap();
        }
        out
    }
}

/// Joint PCA over points zero-padded to a common dimension (at least 2).
///
/// The covariance uses the `n - 1` normalization; each direction's sign is
/// chosen so its largest-magnitude component is positive.
pub fn pca_export(points: &[(PointSource, Vec<f64>)]) -> Result<PcaExport, EvalError> {
    let n = points.len();
    if n < 3 {
        return Err(EvalError::TooFewPoints(n));
    }
    let dim = points.iter().map(|p| p.1.len()).max().unwrap_or(0).max(2);
    let mut x = DMatrix::<f64>::zeros(n, dim);
    for (r, (_, p)) in points.iter().enumerate() {
        for (c, &v) in p.iter().enumerate() {
            x[(r, c)] = v;
        }
    }
    let mean: Vec<f64> = (0..dim).map(|c| x.column(c).sum() / n as f64).collect();
    for r in 0..n {
        for c in 0..dim {
            x[(r, c)] -= mean[c];
        }
    }
    if x.iter().all(|&v| v == 0.0) {
        return Err(EvalError::RankZero);
    }
    let cov = (x.transpose() * &x) / (n - 1) as f64;
    let total: f64 = cov.trace();
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let direction = |k: usize| -> Vec<f64> {
        let col = eig.eigenvectors.column(order[k]);
        let mut v: Vec<f64> = col.iter().copied().collect();
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        v.iter_mut().for_each(|a| *a /= norm);
        let lead = (0..dim).fold(0, |best, i| if v[i].abs() > v[best].abs() { i } else { best });
        if v[lead] < 0.0 {
            v.iter_mut().for_each(|a| *a = -*a);
        }
        v
    };
    let directions = [direction(0), direction(1)];
    let eigenvalues = [eig.eigenvalues[order[0]].max(0.0), eig.eigenvalues[order[1]].max(0.0)];
    let explained_variance_ratio = [eigenvalues[0] / total, eigenvalues[1] / total];
    let projections = points
        .iter()
        .enumerate()
        .map(|(r, (src, _))| {
            let row = x.row(r);
            let proj = |d: &[f64]| row.iter().zip(d).map(|(a, b)| a * b).sum::<f64>();
            (*src, [proj(&directions[0]), proj(&directions[1])])
        })
        .collect();
    Ok(PcaExport { directions, eigenvalues, explained_variance_ratio, projections })
}
