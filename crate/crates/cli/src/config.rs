//! Flat `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Keys are
//! case-insensitive and `-` may be used for `_`. See [`KEYS`] for the list.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use lordsig::lord::{LordConfig, TrainingMode};
use lordsig::ode::{Method, SolverConfig};
use lordsig::path::TaskHint;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelChoice {
    Lord,
    Nrde,
    DeNrde,
}

impl ModelChoice {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "lord" => Some(Self::Lord),
            "nrde" => Some(Self::Nrde),
            "de-nrde" | "de_nrde" => Some(Self::DeNrde),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Lord => "lord",
            Self::Nrde => "nrde",
            Self::DeNrde => "de-nrde",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    pub out: PathBuf,
    pub seeds: Vec<u64>,
    /// Observations per window.
    pub p: usize,
    pub solver: SolverConfig,
    pub lord: LordConfig,
    pub model: ModelChoice,
    /// Log-signature depth of the NRDE and DE-NRDE baselines; defaults to `d2`.
    pub baseline_depth: Option<usize>,
    pub de_ratio: f64,
    pub time_scale: f64,
    pub split_seed: u64,
    pub task: TaskHint,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            out: PathBuf::from("out"),
            seeds: vec![1, 2, 3, 4, 5],
            p: 32,
            solver: SolverConfig::default(),
            lord: LordConfig::default(),
            model: ModelChoice::Lord,
            baseline_depth: None,
            de_ratio: 0.5,
            time_scale: 1.0,
            split_seed: 0,
            task: TaskHint::Auto,
        }
    }
}

/// Every accepted key.
pub const KEYS: &[&str] = &[
    "dataset", "out", "seeds", "p", "d1", "d2", "embed_dim", "hidden_dim", "f_width", "f_layers", "g_width",
    "g_layers", "o_width", "o_layers", "c_ae", "c_e", "c_task", "max_iter_ae", "max_iter_task", "lr",
    "batch_size", "mode", "co_train_ae_weight", "val_every", "solver", "steps", "model", "baseline_depth",
    "de_ratio", "time_scale", "split_seed", "task",
];

/// Scalar keys a sweep may vary.
pub const SWEEPABLE: &[&str] = &[
    "p", "d1", "d2", "embed_dim", "hidden_dim", "c_ae", "c_e", "c_task", "max_iter_ae", "max_iter_task", "lr",
    "batch_size", "co_train_ae_weight", "steps", "baseline_depth", "de_ratio", "time_scale",
];

pub fn canonical_key(key: &str) -> String {
    key.trim().to_ascii_lowercase().replace('-', "_")
}

fn parse_seeds(v: &str) -> Result<Vec<u64>, String> {
    let seeds: Vec<u64> = v
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse::<u64>().map_err(|_| format!("invalid seed {s:?}")))
        .collect::<Result<_, _>>()?;
    if seeds.is_empty() {
        return Err("seed list is empty".into());
    }
    Ok(seeds)
}

impl RunConfig {
    /// Sets one key; the error message names the key and the bad value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let key = canonical_key(key);
        let value = value.trim();
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, String> {
            v.parse::<T>().map_err(|_| format!("{key}: cannot parse {v:?}"))
        }
        let l = &mut self.lord;
        match key.as_str() {
            "dataset" => self.dataset = Some(PathBuf::from(value)),
            "out" => self.out = PathBuf::from(value),
            "seeds" | "seed" => self.seeds = parse_seeds(value).map_err(|e| format!("seeds: {e}"))?,
            "p" => self.p = num(&key, value)?,
            "d1" => l.d1 = num(&key, value)?,
            "d2" => l.d2 = num(&key, value)?,
            "embed_dim" => l.embed_dim = if value == "auto" { None } else { Some(num(&key, value)?) },
            "hidden_dim" => l.hidden_dim = num(&key, value)?,
            "f_width" => l.f.width = num(&key, value)?,
            "f_layers" => l.f.hidden_layers = num(&key, value)?,
            "g_width" => l.g.width = num(&key, value)?,
            "g_layers" => l.g.hidden_layers = num(&key, value)?,
            "o_width" => l.o.width = num(&key, value)?,
            "o_layers" => l.o.hidden_layers = num(&key, value)?,
            "c_ae" => l.c_ae = num(&key, value)?,
            "c_e" => l.c_e = num(&key, value)?,
            "c_task" => l.c_task = num(&key, value)?,
            "max_iter_ae" => l.max_iter_ae = num(&key, value)?,
            "max_iter_task" => l.max_iter_task = num(&key, value)?,
            "lr" => l.lr = num(&key, value)?,
            "batch_size" => l.batch_size = num(&key, value)?,
            "mode" => {
                l.mode = TrainingMode::parse(value)
                    .ok_or_else(|| format!("mode: expected lord, fine-tuning, co-train or co-train-wo-pre, got {value:?}"))?
            }
            "co_train_ae_weight" => l.co_train_ae_weight = num(&key, value)?,
            "val_every" => l.val_every = num(&key, value)?,
            "solver" => {
                self.solver.method =
                    Method::parse(value).ok_or_else(|| format!("solver: expected euler, midpoint or rk4, got {value:?}"))?
            }
            "steps" => self.solver.steps_per_window = num(&key, value)?,
            "model" => {
                self.model =
                    ModelChoice::parse(value).ok_or_else(|| format!("model: expected lord, nrde or de-nrde, got {value:?}"))?
            }
            "baseline_depth" => self.baseline_depth = Some(num(&key, value)?),
            "de_ratio" => self.de_ratio = num(&key, value)?,
            "time_scale" => self.time_scale = num(&key, value)?,
            "split_seed" => self.split_seed = num(&key, value)?,
            "task" => {
                self.task = match value {
                    "auto" => TaskHint::Auto,
                    "classification" => TaskHint::Classification,
                    "regression" => TaskHint::Regression,
                    _ => return Err(format!("task: expected auto, classification or regression, got {value:?}")),
                }
            }
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    /// Applies every `key = value` line of `file` on top of `self`.
    pub fn load_file(&mut self, file: &Path) -> Result<()> {
        let text = fs::read_to_string(file).with_context(|| format!("reading config {}", file.display()))?;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                bail!("{}:{}: expected key = value", file.display(), i + 1);
            };
            if let Err(e) = self.set(k, v) {
                bail!("{}:{}: {e}", file.display(), i + 1);
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.lord.validate().context("config")?;
        if self.p < 2 {
            bail!("config: p must be at least 2, got {}", self.p);
        }
        if self.solver.steps_per_window == 0 {
            bail!("config: steps must be positive");
        }
        if self.seeds.is_empty() {
            bail!("config: seeds must not be empty");
        }
        if !(self.de_ratio > 0.0 && self.de_ratio <= 1.0) {
            bail!("config: de_ratio must be in (0, 1], got {}", self.de_ratio);
        }
        if !(self.time_scale > 0.0 && self.time_scale.is_finite()) {
            bail!("config: time_scale must be positive, got {}", self.time_scale);
        }
        if let Some(d) = self.baseline_depth {
            if !(1..=4).contains(&d) {
                bail!("config: baseline_depth must be in 1..=4, got {d}");
            }
        }
        Ok(())
    }

    pub fn baseline_depth(&self) -> usize {
        self.baseline_depth.unwrap_or(self.lord.d2)
    }

    /// The resolved configuration in the same format it is read from.
    pub fn to_text(&self) -> String {
        let l = &self.lord;
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        let task = match self.task {
            TaskHint::Auto => "auto",
            TaskHint::Classification => "classification",
            TaskHint::Regression => "regression",
        };
        let mut out = String::new();
        let mut kv = |k: &str, v: String| writeln!(out, "{k} = {v}").unwrap();
        if let Some(d) = &self.dataset {
            kv("dataset", d.display().to_string());
        }
        kv("seeds", seeds.join(","));
        kv("p", self.p.to_string());
        kv("d1", l.d1.to_string());
        kv("d2", l.d2.to_string());
        kv("embed_dim", l.embed_dim.map_or_else(|| "auto".into(), |e| e.to_string()));
        kv("hidden_dim", l.hidden_dim.to_string());
        for (name, n) in [("f", l.f), ("g", l.g), ("o", l.o)] {
            kv(&format!("{name}_width"), n.width.to_string());
            kv(&format!("{name}_layers"), n.hidden_layers.to_string());
        }
        kv("c_ae", l.c_ae.to_string());
        kv("c_e", l.c_e.to_string());
        kv("c_task", l.c_task.to_string());
        kv("max_iter_ae", l.max_iter_ae.to_string());
        kv("max_iter_task", l.max_iter_task.to_string());
        kv("lr", l.lr.to_string());
        kv("batch_size", l.batch_size.to_string());
        kv("mode", l.mode.as_str().into());
        kv("co_train_ae_weight", l.co_train_ae_weight.to_string());
        kv("val_every", l.val_every.to_string());
        kv("solver", self.solver.method.as_str().into());
        kv("steps", self.solver.steps_per_window.to_string());
        kv("model", self.model.as_str().into());
        kv("baseline_depth", self.baseline_depth().to_string());
        kv("de_ratio", self.de_ratio.to_string());
        kv("time_scale", self.time_scale.to_string());
        kv("split_seed", self.split_seed.to_string());
        kv("task", task.into());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut cfg = RunConfig::default();
        cfg.set("max_iter_AE", "7").unwrap();
        cfg.set("P", "16").unwrap();
        cfg.set("mode", "co-train").unwrap();
        cfg.set("seeds", "3, 4").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("run.conf");
        fs::write(&file, cfg.to_text()).unwrap();
        let mut back = RunConfig::default();
        back.load_file(&file).unwrap();
        assert_eq!(back.lord, cfg.lord);
        assert_eq!((back.p, back.seeds.clone()), (16, vec![3, 4]));
    }

    #[test]
    fn errors_name_file_line_and_key() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("bad.conf");
        fs::write(&file, "# comment\nlr = 0.1\nbogus = 1\n").unwrap();
        let err = RunConfig::default().load_file(&file).unwrap_err().to_string();
        assert!(err.contains("bad.conf:3") && err.contains("bogus"), "{err}");
        fs::write(&file, "lr = fast\n").unwrap();
        let err = RunConfig::default().load_file(&file).unwrap_err().to_string();
        assert!(err.contains("lr"), "{err}");
    }

    #[test]
    fn every_key_is_settable() {
        let sample = |k: &str| match k {
            "dataset" | "out" => "x",
            "mode" => "lord",
            "solver" => "euler",
            "model" => "nrde",
            "task" => "auto",
            "seeds" => "1",
            "lr" | "c_ae" | "c_e" | "c_task" | "de_ratio" | "time_scale" | "co_train_ae_weight" => "0.5",
            _ => "2",
        };
        for k in KEYS {
            RunConfig::default().set(k, sample(k)).unwrap();
        }
        for k in SWEEPABLE {
            assert!(KEYS.contains(k));
        }
    }
}
