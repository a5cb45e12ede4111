use std::fmt::Write as _;

use super::EvalError;

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in row.iter().enumerate() {
        if x > row[best] {
            best = i;
        }
    }
    best
}

pub fn accuracy(labels: &[usize], predicted: &[usize]) -> f64 {
    let hits = labels.iter().zip(predicted).filter(|(a, b)| a == b).count();
    hits as f64 / labels.len() as f64
}

/// Area under the ROC curve from the rank statistic, ties counted 1/2.
/// `None` when one of the two classes is absent.
pub fn roc_auc_binary(positive: &[bool], scores: &[f64]) -> Option<f64> {
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Average ranks over tied groups.
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        rank_sum_pos += avg * order[i..=j].iter().filter(|&&k| positive[k]).count() as f64;
        i = j + 1;
    }
    let np = n_pos as f64;
    Some((rank_sum_pos - np * (np + 1.0) / 2.0) / (np * n_neg as f64))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationMetrics {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub weighted_f1: f64,
    /// Binary rank AUC, or the one-vs-rest macro average; NaN when undefined.
    pub roc_auc: f64,
    pub warnings: Vec<String>,
}

impl ClassificationMetrics {
    pub fn named(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("accuracy", self.accuracy),
            ("macro_f1", self.macro_f1),
            ("weighted_f1", self.weighted_f1),
            ("roc_auc", self.roc_auc),
        ]
    }
}

/// Scores class probabilities (one row per sample) against integer labels.
pub fn classification_metrics(labels: &[usize], probs: &[Vec<f64>]) -> Result<ClassificationMetrics, EvalError> {
    if labels.len() != probs.len() {
        return Err(EvalError::LengthMismatch { labels: labels.len(), predictions: probs.len() });
    }
    if labels.is_empty() {
        return Err(EvalError::Empty);
    }
    let k = probs[0].len();
    for (row, p) in probs.iter().enumerate() {
        let sum: f64 = p.iter().sum();
        if p.len() != k || (sum - 1.0).abs() > 1e-6 {
            return Err(EvalError::ProbabilityRow { row, sum });
        }
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= k) {
        return Err(EvalError::LabelRange { label, classes: k });
    }
    let predicted: Vec<usize> = probs.iter().map(|p| argmax(p)).collect();

    let mut f1 = vec![0.0; k];
    let mut support = vec![0usize; k];
    for (c, f) in f1.iter_mut().enumerate() {
        let (mut tp, mut fp, mut fne) = (0usize, 0usize, 0usize);
        for (&y, &p) in labels.iter().zip(&predicted) {
            match (y == c, p == c) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fne += 1,
                _ => {}
            }
        }
        support[c] = tp + fne;
        let denom = 2 * tp + fp + fne;
        *f = if denom == 0 { 0.0 } else { 2.0 * tp as f64 / denom as f64 };
    }
    let n = labels.len() as f64;
    let macro_f1 = f1.iter().sum::<f64>() / k as f64;
    let weighted_f1 = f1.iter().zip(&support).map(|(f, &s)| f * s as f64).sum::<f64>() / n;

    let mut warnings = Vec::new();
    let roc_auc = if k == 2 {
        let pos: Vec<bool> = labels.iter().map(|&y| y == 1).collect();
        let scores: Vec<f64> = probs.iter().map(|p| p[1]).collect();
        roc_auc_binary(&pos, &scores).unwrap_or_else(|| {
            warnings.push("ROCAUC undefined: only one class present".to_string());
            f64::NAN
        })
    } else {
        let aucs: Vec<f64> = (0..k)
            .filter_map(|c| {
                let pos: Vec<bool> = labels.iter().map(|&y| y == c).collect();
                let scores: Vec<f64> = probs.iter().map(|p| p[c]).collect();
                let auc = roc_auc_binary(&pos, &scores);
                if auc.is_none() {
                    warnings.push(format!("ROCAUC for class {c} undefined: class absent or universal"));
                }
                auc
            })
            .collect();
        if aucs.is_empty() {
            f64::NAN
        } else {
            aucs.iter().sum::<f64>() / aucs.len() as f64
        }
    };
    Ok(ClassificationMetrics { accuracy: accuracy(labels, &predicted), macro_f1, weighted_f1, roc_auc, warnings })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionMetrics {
    /// NaN when `y` has zero variance.
    pub r2: f64,
    pub explained_variance: f64,
    pub mse: f64,
    pub mae: f64,
}

impl RegressionMetrics {
    pub fn named(&self) -> Vec<(&'static str, f64)> {
        vec![("r2", self.r2), ("explained_variance", self.explained_variance), ("mse", self.mse), ("mae", self.mae)]
    }
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64
}

pub fn regression_metrics(y: &[f64], y_hat: &[f64]) -> Result<RegressionMetrics, EvalError> {
    if y.len() != y_hat.len() {
        return Err(EvalError::LengthMismatch { labels: y.len(), predictions: y_hat.len() });
    }
    if y.len() < 2 {
        return Err(EvalError::TooFewValues(y.len()));
    }
    let resid: Vec<f64> = y.iter().zip(y_hat).map(|(a, b)| a - b).collect();
    let ss_res: f64 = resid.iter().map(|r| r * r).sum();
    let y_bar = mean(y);
    let ss_tot: f64 = y.iter().map(|v| (v - y_bar) * (v - y_bar)).sum();
    let var_y = variance(y);
    let undefined = ss_tot == 0.0;
    Ok(RegressionMetrics {
        r2: if undefined { f64::NAN } else { 1.0 - ss_res / ss_tot },
        explained_variance: if undefined { f64::NAN } else { 1.0 - variance(&resid) / var_y },
        mse: ss_res / y.len() as f64,
        mae: resid.iter().map(|r| r.abs()).sum::<f64>() / y.len() as f64,
    })
}

/// One metric across seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSeries {
    pub name: String,
    pub per_seed: Vec<(u64, f64)>,
    pub mean: f64,
    /// Sample standard deviation (zero for a single seed).
    pub std: f64,
}

/// Per-seed metric values with their mean and standard deviation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricReport {
    pub metrics: Vec<MetricSeries>,
}

impl MetricReport {
    /// Collects `(seed, [(metric, value)])` runs; metric order follows the first run.
    pub fn aggregate(runs: &[(u64, Vec<(String, f64)>)]) -> Self {
        let names: Vec<String> = runs.first().map(|r| r.1.iter().map(|(n, _)| n.clone()).collect()).unwrap_or_default();
        let metrics = names
            .into_iter()
            .map(|name| {
                let per_seed: Vec<(u64, f64)> = runs
                    .iter()
                    .filter_map(|(seed, vals)| vals.iter().find(|(n, _)| *n == name).map(|&(_, v)| (*seed, v)))
                    .collect();
                let values: Vec<f64> = per_seed.iter().map(|p| p.1).collect();
                let m = mean(&values);
                let std = if values.len() > 1 {
                    (values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
                } else {
                    0.0
                };
                MetricSeries { name, per_seed, mean: m, std }
            })
            .collect();
        Self { metrics }
    }

    pub fn get(&self, name: &str) -> Option<&MetricSeries> {
        self.metrics.iter().find(|m| m.name == name)
    }

    /// `metric,seed,value` rows, then one `metric,aggregate,mean±std` row per metric.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,seed,value\n");
        for m in &self.metrics {
            for (seed, v) in &m.per_seed {
                writeln!(out, "{},{},{}", m.name, seed, v).unwrap();
            }
        }
        for m in &self.metrics {
            writeln!(out, "{},aggregate,{}±{}", m.name, m.mean, m.std).unwrap();
        }
        out
    }
}
