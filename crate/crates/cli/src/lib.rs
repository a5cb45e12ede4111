//! Command-line front end: log-signature export, training, evaluation,
//! sweeps, PCA export and synthetic data generation.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use anyhow::{anyhow, Result};
use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "lordsig", version, about = "Log-signature transforms and LORD neural rough differential equations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the windowed log-signature stream of every sample.
    Logsig {
        #[command(flatten)]
        common: Common,
        /// Truncation depth; defaults to d2.
        #[arg(long)]
        depth: Option<usize>,
    },
    /// Train one model per seed and report test metrics.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Score an inference checkpoint on the test split.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Train once per value of one configuration key.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        axis: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
    },
    /// Project log-signatures and embedding increments onto two principal components.
    ExportPca {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Generate a synthetic dataset.
    Synth {
        /// levy-area or logsig-functional.
        #[arg(long, default_value = "levy-area")]
        kind: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Observations per path.
        #[arg(long, default_value_t = 512)]
        length: usize,
    },
}

/// Flags shared by the data commands. Flags override the config file.
#[derive(Debug, Args)]
pub struct Common {
    /// `key = value` configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Comma-separated seeds.
    #[arg(long)]
    pub seed: Option<String>,
    /// lord, fine-tuning, co-train or co-train-wo-pre.
    #[arg(long)]
    pub mode: Option<String>,
    /// lord, nrde or de-nrde.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub d1: Option<usize>,
    #[arg(long)]
    pub d2: Option<usize>,
    /// euler, midpoint or rk4.
    #[arg(long)]
    pub solver: Option<String>,
    /// Solver steps per window.
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub max_iter_ae: Option<usize>,
    #[arg(long)]
    pub max_iter_task: Option<usize>,
    /// Any configuration key, as `key=value`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

impl Common {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(file) = &self.config {
            cfg.load_file(file)?;
        }
        let mut pairs: Vec<(&str, String)> = Vec::new();
        let path = |p: &PathBuf| p.display().to_string();
        let flags = [
            ("dataset", self.dataset.as_ref().map(path)),
            ("out", self.out.as_ref().map(path)),
            ("seeds", self.seed.clone()),
            ("mode", self.mode.clone()),
            ("model", self.model.clone()),
            ("p", self.p.map(|v| v.to_string())),
            ("d1", self.d1.map(|v| v.to_string())),
            ("d2", self.d2.map(|v| v.to_string())),
            ("solver", self.solver.clone()),
            ("steps", self.steps.map(|v| v.to_string())),
            ("max_iter_ae", self.max_iter_ae.map(|v| v.to_string())),
            ("max_iter_task", self.max_iter_task.map(|v| v.to_string())),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                pairs.push((k, v));
            }
        }
        for kv in &self.set {
            let (k, v) = kv.split_once('=').ok_or_else(|| anyhow!("--set {kv:?}: expected key=value"))?;
            pairs.push((k, v.to_string()));
        }
        for (k, v) in pairs {
            cfg.set(k, &v).map_err(|e| anyhow!("{e}"))?;
        }
        Ok(cfg)
    }
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("LORDSIG_THREADS") {
        let n: usize = v.parse().map_err(|_| anyhow!("LORDSIG_THREADS: expected a thread count, got {v:?}"))?;
        // A second call in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    init_threads()?;
    match cli.command {
        Command::Logsig { common, depth } => commands::cmd_logsig(&common.resolve()?, depth),
        Command::Train { common } => commands::cmd_train(&common.resolve()?).map(drop),
        Command::Eval { common, checkpoint } => {
            let cfg = common.resolve()?;
            let solver = (common.solver.is_some() || common.steps.is_some()).then_some(cfg.solver);
            commands::cmd_eval(&cfg, &checkpoint, solver).map(drop)
        }
        Command::Sweep { common, axis, values } => commands::cmd_sweep(&common.resolve()?, &axis, &values).map(drop),
        Command::ExportPca { common, checkpoint } => commands::cmd_export_pca(&common.resolve()?, &checkpoint).map(drop),
        Command::Synth { kind, out, seed, length } => commands::cmd_synth(&kind, &out, seed, length),
    }
}
