//! Seeded synthetic datasets: smooth random paths labelled by the sign of
//! their Lévy area, or by a fixed linear functional of their log-signature.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::path::{seeded_split, Dataset, Sample, Split, Target, TaskKind, TimeSeriesPath};
use crate::tensoralg::{path_logsignature, LyndonBasis};

/// Shape of the generated paths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathSpec {
    pub length: usize,
    pub raw_channels: usize,
    /// Number of Fourier modes per channel.
    pub harmonics: usize,
    /// Standard deviation of the i.i.d. observation noise.
    pub noise: f64,
}

impl Default for PathSpec {
    fn default() -> Self {
        Self { length: 512, raw_channels: 2, harmonics: 3, noise: 0.01 }
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// A sum of low-frequency sinusoids with random amplitudes and phases, plus
/// small noise, observed on the uniform grid `t_i = i / (length - 1)`.
pub fn smooth_path(rng: &mut ChaCha8Rng, spec: &PathSpec) -> TimeSeriesPath {
    let modes: Vec<Vec<(f64, f64)>> = (0..spec.raw_channels)
        .map(|_| {
            (1..=spec.harmonics)
                .map(|k| (gaussian(rng) / k as f64, rng.gen::<f64>() * std::f64::consts::TAU))
                .collect()
        })
        .collect();
    let n = spec.length;
    let times: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
    let values = times
        .iter()
        .map(|&t| {
            modes
                .iter()
                .map(|ch| {
                    let clean: f64 = ch
                        .iter()
                        .enumerate()
                        .map(|(k, &(a, phi))| a * (std::f64::consts::TAU * (k + 1) as f64 * t + phi).sin())
                        .sum();
                    clean + spec.noise * gaussian(rng)
                })
                .collect()
        })
        .collect();
    TimeSeriesPath::new(times, values).expect("generated path is valid")
}

/// Signed Lévy area between raw channels `a` and `b` of the piecewise-linear path.
pub fn levy_area(path: &TimeSeriesPath, a: usize, b: usize) -> f64 {
    let v = path.values();
    let (x0, y0) = (v[0][a], v[0][b]);
    v.windows(2)
        .map(|w| 0.5 * ((w[0][a] - x0) * (w[1][b] - w[0][b]) - (w[0][b] - y0) * (w[1][a] - w[0][a])))
        .sum()
}

fn sample_id(i: usize) -> String {
    format!("s{i:05}")
}

/// Binary classification: class 1 when the Lévy area of the first two raw
/// channels is positive. Splits are assigned in order: `n_train`, `n_val`, `n_test`.
pub fn levy_area_dataset(n_train: usize, n_val: usize, n_test: usize, spec: &PathSpec, seed: u64) -> Dataset {
    assert!(spec.raw_channels >= 2, "Lévy area needs two raw channels");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total = n_train + n_val + n_test;
    let samples = (0..total)
        .map(|i| {
            let path = smooth_path(&mut rng, spec);
            let class = usize::from(levy_area(&path, 0, 1) > 0.0);
            let split = if i < n_train {
                Split::Train
            } else if i < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            };
            Sample { id: sample_id(i), path, target: Target::Class(class), split }
        })
        .collect();
    Dataset { samples, task: TaskKind::Classification { classes: 2 } }
}

/// Regression onto `w . LogSig^{(2)}` of the whole (time-augmented) path,
/// with `w` drawn once from `functional_seed`. Splits are the seeded 70/15/15.
pub fn logsig_functional_dataset(n: usize, spec: &PathSpec, seed: u64, functional_seed: u64) -> Dataset {
    let d = spec.raw_channels + 1;
    let basis = LyndonBasis::new(d, 2);
    let mut wrng = ChaCha8Rng::seed_from_u64(functional_seed);
    let w: Vec<f64> = (0..basis.len()).map(|_| gaussian(&mut wrng)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let splits = seeded_split(n, seed);
    let samples = splits
        .into_iter()
        .enumerate()
        .map(|(i, split)| {
            let path = smooth_path(&mut rng, spec);
            let ls = path_logsignature(&path.points(0, path.len() - 1), &basis).expect("valid path");
            let y = ls.coeffs.iter().zip(&w).map(|(a, b)| a * b).sum();
            Sample { id: sample_id(i), path, target: Target::Value(y), split }
        })
        .collect();
    Dataset { samples, task: TaskKind::Regression }
}

/// Writes `dataset` in the on-disk dataset layout (`samples/`, `labels.csv`, `splits.csv`).
pub fn write_dataset(dataset: &Dataset, root: &Path) -> io::Result<()> {
    let dir = root.join("samples");
    fs::create_dir_all(&dir)?;
    let mut labels = String::from("id,target\n");
    let mut splits = String::from("id,split\n");
    for s in &dataset.samples {
        let k = s.path.raw_channels();
        let mut body = String::from("t");
        for c in 1..=k {
            body.push_str(&format!(",c{c}"));
        }
        body.push('\n');
        for (t, row) in s.path.times().iter().zip(s.path.values()) {
            body.push_str(&t.to_string());
            for v in row {
                body.push(',');
                body.push_str(&v.to_string());
            }
            body.push('\n');
        }
        fs::File::create(dir.join(format!("{}.csv", s.id)))?.write_all(body.as_bytes())?;
        let target = match s.target {
            Target::Class(c) => c.to_string(),
            Target::Value(v) => v.to_string(),
        };
        labels.push_str(&format!("{},{}\n", s.id, target));
        splits.push_str(&format!("{},{}\n", s.id, s.split.as_str()));
    }
    fs::write(root.join("labels.csv"), labels)?;
    fs::write(root.join("splits.csv"), splits)?;
    Ok(())
}
