use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{PathError, TimeSeriesPath};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "train" => Some(Split::Train),
            "val" => Some(Split::Val),
            "test" => Some(Split::Test),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    Class(usize),
    Value(f64),
}

impl TaskKind {
    /// Width of the output layer: class count, or 1 for regression.
    pub fn output_dim(self) -> usize {
        match self {
            TaskKind::Classification { classes } => classes,
            TaskKind::Regression => 1,
        }
    }
}

impl Target {
    pub fn class(self) -> Option<usize> {
        match self {
            Target::Class(c) => Some(c),
            Target::Value(_) => None,
        }
    }

    pub fn value(self) -> f64 {
        match self {
            Target::Class(c) => c as f64,
            Target::Value(v) => v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Classification { classes: usize },
    Regression,
}

/// How to interpret `labels.csv` targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TaskHint {
    /// Classification when every target is a non-negative integer.
    #[default]
    Auto,
    Classification,
    Regression,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub path: TimeSeriesPath,
    pub target: Target,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub task: TaskKind,
}

impl Dataset {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &Sample> {
        self.samples.iter().filter(move |s| s.split == split)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Augmented path dimension shared by every sample.
    pub fn dim(&self) -> usize {
        self.samples.first().map_or(0, |s| s.path.dim())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LoadOptions {
    pub task: TaskHint,
    /// Seed of the 70/15/15 split used when `splits.csv` is absent.
    pub split_seed: u64,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self { task: TaskHint::Auto, split_seed: 0 }
    }
}

fn parse_f64(file: &Path, line: usize, field: &str) -> Result<f64, PathError> {
    field.trim().parse::<f64>().map_err(|_| PathError::Malformed {
        file: file.to_path_buf(),
        line,
        message: format!("not a number: {field:?}"),
    })
}

fn open_csv(file: &Path) -> Result<csv::Reader<fs::File>, PathError> {
    let f = fs::File::open(file).map_err(|e| PathError::Io { file: file.to_path_buf(), source: e })?;
    Ok(csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(f))
}

fn records(file: &Path) -> Result<(Vec<String>, Vec<(usize, csv::StringRecord)>), PathError> {
    let mut reader = open_csv(file)?;
    let malformed = |e: csv::Error| {
        let line = e.position().map_or(0, |p| p.line() as usize);
        PathError::Malformed { file: file.to_path_buf(), line, message: e.to_string() }
    };
    let header = reader.headers().map_err(malformed)?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(malformed)?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        rows.push((line, rec));
    }
    Ok((header, rows))
}

fn expect_header(file: &Path, header: &[String], expected: &[&str]) -> Result<(), PathError> {
    if header.len() != expected.len() || header.iter().zip(expected).any(|(a, b)| a != b) {
        return Err(PathError::Malformed {
            file: file.to_path_buf(),
            line: 1,
            message: format!("expected header {}", expected.join(",")),
        });
    }
    Ok(())
}

/// Reads one `samples/<id>.csv` file with header `t,c1,...,ck`.
pub fn read_sample(file: &Path) -> Result<TimeSeriesPath, PathError> {
    let (header, rows) = records(file)?;
    if header.len() < 2 || header[0] != "t" {
        return Err(PathError::Malformed {
            file: file.to_path_buf(),
            line: 1,
            message: "expected header t,c1,...,ck".into(),
        });
    }
    let mut times = Vec::with_capacity(rows.len());
    let mut values = Vec::with_capacity(rows.len());
    for (line, rec) in rows {
        if rec.len() != header.len() {
            return Err(PathError::Malformed {
                file: file.to_path_buf(),
                line,
                message: format!("expected {} fields, found {}", header.len(), rec.len()),
            });
        }
        times.push(parse_f64(file, line, &rec[0])?);
        let row = rec.iter().skip(1).map(|f| parse_f64(file, line, f)).collect::<Result<_, _>>()?;
        values.push(row);
    }
    TimeSeriesPath::from_unshifted(times, values).map_err(|e| match e {
        PathError::NonMonotone { index } => PathError::Malformed {
            file: file.to_path_buf(),
            line: index + 2,
            message: "non-monotone timestamps".into(),
        },
        other => PathError::InFile { file: file.to_path_buf(), source: Box::new(other) },
    })
}

/// Loads `root/samples/*.csv`, `root/labels.csv` and optionally `root/splits.csv`.
/// Samples are ordered by id.
pub fn load_dataset(root: &Path, options: &LoadOptions) -> Result<Dataset, PathError> {
    let sample_dir = root.join("samples");
    let entries = fs::read_dir(&sample_dir)
        .map_err(|e| PathError::Io { file: sample_dir.clone(), source: e })?;
    let mut files: Vec<(String, PathBuf)> = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| PathError::Io { file: sample_dir.clone(), source: e })?;
        let p = entry.path();
        if p.extension().and_then(|e| e.to_str()) == Some("csv") {
            let id = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
            files.push((id, p));
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(PathError::Empty);
    }

    let labels_file = root.join("labels.csv");
    let (header, rows) = records(&labels_file)?;
    expect_header(&labels_file, &header, &["id", "target"])?;
    let mut raw_targets: HashMap<String, String> = HashMap::new();
    for (_, rec) in rows {
        raw_targets.insert(rec[0].to_string(), rec[1].to_string());
    }

    let mut targets_str = Vec::with_capacity(files.len());
    for (id, _) in &files {
        let t = raw_targets.get(id).ok_or_else(|| PathError::MissingLabel {
            file: labels_file.clone(),
            id: id.clone(),
        })?;
        targets_str.push(t.clone());
    }
    let as_int: Option<Vec<usize>> = targets_str.iter().map(|t| t.parse::<usize>().ok()).collect();
    let (task, targets) = match (options.task, as_int) {
        (TaskHint::Regression, _) | (TaskHint::Auto, None) => {
            let v = targets_str
                .iter()
                .map(|t| parse_f64(&labels_file, 0, t).map(Target::Value))
                .collect::<Result<Vec<_>, _>>()?;
            (TaskKind::Regression, v)
        }
        (_, Some(classes)) => {
            let k = classes.iter().max().map_or(0, |m| m + 1);
            (TaskKind::Classification { classes: k }, classes.into_iter().map(Target::Class).collect())
        }
        (TaskHint::Classification, None) => {
            return Err(PathError::Malformed {
                file: labels_file,
                line: 0,
                message: "classification targets must be non-negative integers".into(),
            })
        }
    };

    let splits_file = root.join("splits.csv");
    let splits: Vec<Split> = if splits_file.exists() {
        let (header, rows) = records(&splits_file)?;
        expect_header(&splits_file, &header, &["id", "split"])?;
        let mut map = HashMap::new();
        for (line, rec) in rows {
            let s = Split::parse(&rec[1]).ok_or_else(|| PathError::Malformed {
                file: splits_file.clone(),
                line,
                message: format!("unknown split {:?}", &rec[1]),
            })?;
            map.insert(rec[0].to_string(), s);
        }
        files
            .iter()
            .map(|(id, _)| {
                map.get(id).copied().ok_or_else(|| PathError::MissingLabel {
                    file: splits_file.clone(),
                    id: id.clone(),
                })
            })
            .collect::<Result<_, _>>()?
    } else {
        seeded_split(files.len(), options.split_seed)
    };

    let mut samples = Vec::with_capacity(files.len());
    for (((id, file), target), split) in files.into_iter().zip(targets).zip(splits) {
        let path = read_sample(&file)?;
        samples.push(Sample { id, path, target, split });
    }
    let dim = samples[0].path.dim();
    if let Some(bad) = samples.iter().find(|s| s.path.dim() != dim) {
        return Err(PathError::InFile {
            file: sample_dir.join(format!("{}.csv", bad.id)),
            source: Box::new(PathError::RowWidth {
                index: 0,
                expected: dim - 1,
                actual: bad.path.raw_channels(),
            }),
        });
    }
    Ok(Dataset { samples, task })
}

/// Seeded 70/15/15 assignment over `n` samples.
pub fn seeded_split(n: usize, seed: u64) -> Vec<Split> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (0.7 * n as f64).round() as usize;
    let n_val = (0.15 * n as f64).round() as usize;
    let mut splits = vec![Split::Test; n];
    for (rank, &i) in order.iter().enumerate() {
        splits[i] = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
    }
    splits
}

/// Per-channel standardization statistics fit on the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Final time each sample's clock is rescaled to.
    pub time_scale: f64,
    #[serde(default)]
    pub warnings: Vec<String>,
}

/// Standardizes raw channels with training statistics and rescales every
/// sample's clock onto `[0, time_scale]`.
pub fn normalize(dataset: &mut Dataset, time_scale: f64) -> Result<Normalization, PathError> {
    let train: Vec<&Sample> = dataset.split(Split::Train).collect();
    if train.is_empty() {
        return Err(PathError::EmptySplit(Split::Train.as_str()));
    }
    let channels = train[0].path.raw_channels();
    let mut sum = vec![0.0; channels];
    let mut count = 0usize;
    for s in &train {
        for row in s.path.values() {
            sum.iter_mut().zip(row).for_each(|(a, x)| *a += x);
        }
        count += s.path.len();
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
    let mut sq = vec![0.0; channels];
    for s in &train {
        for row in s.path.values() {
            for ((a, x), m) in sq.iter_mut().zip(row).zip(&mean) {
                *a += (x - m) * (x - m);
            }
        }
    }
    let mut warnings = Vec::new();
    let std: Vec<f64> = sq
        .iter()
        .enumerate()
        .map(|(c, s)| {
            let sd = (s / count as f64).sqrt();
            if sd < 1e-12 {
                let msg = format!("channel c{} has zero variance; centering only", c + 1);
                log::warn!("{msg}");
                warnings.push(msg);
                1.0
            } else {
                sd
            }
        })
        .collect();

    let norm = Normalization { mean, std, time_scale, warnings };
    norm.apply(dataset)?;
    Ok(norm)
}

impl Normalization {
    /// Applies previously fitted statistics, e.g. to a dataset evaluated later.
    pub fn apply(&self, dataset: &mut Dataset) -> Result<(), PathError> {
        for sample in &mut dataset.samples {
            if sample.path.raw_channels() != self.mean.len() {
                return Err(PathError::RowWidth { index: 0, expected: self.mean.len(), actual: sample.path.raw_channels() });
            }
            for row in sample.path.values_mut() {
                for ((x, m), sd) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                    *x = (*x - m) / sd;
                }
            }
            let end = sample.path.end_time();
            if end > 0.0 {
                let factor = self.time_scale / end;
                sample.path.times_mut().iter_mut().for_each(|t| *t *= factor);
            }
        }
        Ok(())
    }
}
