use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use lordsig::eval::{pca_export, MetricReport, PointSource};
use lordsig::lord::{
    evaluate, pretrain, prepare_dataset, split_of, train_main, train_supervised, write_model_checkpoint, AnyModel,
    CheckpointContent, DeNrdeModel, LordModel, ModelMeta, NrdeModel, PreparedSample, Predictor, TrainReport,
};
use lordsig::nn::checkpoint::read_checkpoint;
use lordsig::ode::SolverConfig;
use lordsig::path::{load_dataset, logsig_stream, normalize, plan_windows, Dataset, LoadOptions, Normalization, Split, TaskHint};
use lordsig::synthetic::{levy_area_dataset, logsig_functional_dataset, write_dataset, PathSpec};
use lordsig::tensoralg::LyndonBasis;

use crate::config::{canonical_key, ModelChoice, RunConfig, SWEEPABLE};

fn write(path: &Path, content: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, content).with_context(|| format!("writing {}", path.display()))
}

fn create(path: &Path) -> Result<fs::File> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::File::create(path).with_context(|| format!("writing {}", path.display()))
}

/// Loads and normalizes the configured dataset.
fn load(cfg: &RunConfig) -> Result<(Dataset, Normalization)> {
    let root = cfg.dataset.as_ref().ok_or_else(|| anyhow!("no dataset given (use --dataset or `dataset =`)"))?;
    let mut ds = load_dataset(root, &LoadOptions { task: cfg.task, split_seed: cfg.split_seed })
        .with_context(|| format!("loading dataset {}", root.display()))?;
    let norm = normalize(&mut ds, cfg.time_scale).with_context(|| format!("normalizing {}", root.display()))?;
    Ok((ds, norm))
}

/// Writes each sample's log-signature stream, one row per window.
pub fn cmd_logsig(cfg: &RunConfig, depth: Option<usize>) -> Result<()> {
    let (ds, _) = load(cfg)?;
    let depth = depth.unwrap_or(cfg.lord.d2);
    if !(1..=4).contains(&depth) {
        bail!("--depth must be in 1..=4, got {depth}");
    }
    let basis = LyndonBasis::new(ds.dim(), depth);
    let header = basis.labels().join(",");
    for s in &ds.samples {
        let ctx = || format!("sample {}", s.id);
        let plan = plan_windows(&s.path, cfg.p).with_context(ctx)?;
        let stream = logsig_stream(&s.path, &plan, &basis).with_context(ctx)?;
        let mut body = format!("{header}\n");
        for i in 0..stream.len() {
            let row: Vec<String> = stream.entry(i).iter().map(f64::to_string).collect();
            writeln!(body, "{}", row.join(",")).unwrap();
        }
        write(&cfg.out.join("logsig").join(format!("{}.csv", s.id)), &body)?;
    }
    println!("wrote {} streams to {}", ds.samples.len(), cfg.out.join("logsig").display());
    Ok(())
}

fn stream_depths(cfg: &RunConfig) -> (usize, Option<usize>) {
    match cfg.model {
        ModelChoice::Lord => (cfg.lord.d1, Some(cfg.lord.d2)),
        ModelChoice::Nrde | ModelChoice::DeNrde => (cfg.baseline_depth(), None),
    }
}

struct Splits<'a> {
    train: Vec<&'a PreparedSample>,
    val: Vec<&'a PreparedSample>,
    test: Vec<&'a PreparedSample>,
}

fn splits(prep: &[PreparedSample]) -> Result<Splits<'_>> {
    let s = Splits { train: split_of(prep, Split::Train), val: split_of(prep, Split::Val), test: split_of(prep, Split::Test) };
    for (name, v) in [("train", &s.train), ("val", &s.val), ("test", &s.test)] {
        if v.is_empty() {
            bail!("the {name} split is empty");
        }
    }
    Ok(s)
}

fn checkpoint_extra(cfg: &RunConfig, norm: &Normalization, seed: u64) -> serde_json::Value {
    serde_json::json!({
        "p": cfg.p,
        "seed": seed,
        "split_seed": cfg.split_seed,
        "solver": cfg.solver,
        "normalization": norm,
    })
}

/// Trains one seed; returns the model and report.
fn train_seed(
    cfg: &RunConfig,
    ds: &Dataset,
    norm: &Normalization,
    sp: &Splits<'_>,
    seed: u64,
    dir: &Path,
) -> Result<(AnyModel, TrainReport)> {
    let channels = ds.dim();
    let solver = &cfg.solver;
    match cfg.model {
        ModelChoice::Lord => {
            let mut model = LordModel::build(cfg.lord.clone(), channels, ds.task, seed)?;
            let mut report = TrainReport::new(seed);
            if cfg.lord.mode.pretrains() {
                let pre = pretrain(&mut model, &sp.train, solver, seed)?;
                report.rows.extend(pre.rows);
                if let Some(d) = pre.diverged {
                    report.diverged = Some(d);
                    return Ok((AnyModel::Lord(model), report));
                }
                write_model_checkpoint(
                    &model,
                    CheckpointContent::Encoder,
                    checkpoint_extra(cfg, norm, seed),
                    create(&dir.join("encoder.ckpt"))?,
                )?;
            }
            let main = train_main(&mut model, &sp.train, &sp.val, solver, seed)?;
            report.rows.extend(main.rows);
            report.best_iter = main.best_iter;
            report.best_metric = main.best_metric;
            report.diverged = main.diverged;
            Ok((AnyModel::Lord(model), report))
        }
        ModelChoice::Nrde => {
            let mut model = NrdeModel::build(cfg.lord.clone(), cfg.baseline_depth(), channels, ds.task, seed)?;
            let report = train_supervised(&mut model, &cfg.lord, &sp.train, &sp.val, solver, seed)?;
            Ok((AnyModel::Nrde(model), report))
        }
        ModelChoice::DeNrde => {
            let mut model =
                DeNrdeModel::build(cfg.lord.clone(), cfg.baseline_depth(), cfg.de_ratio, channels, ds.task, seed)?;
            let report = train_supervised(&mut model, &cfg.lord, &sp.train, &sp.val, solver, seed)?;
            Ok((AnyModel::DeNrde(model), report))
        }
    }
}

fn param_counts_csv(model: &AnyModel) -> String {
    let total: usize = model.store().blocks().iter().map(|b| b.data.len()).sum();
    let dec = match model {
        AnyModel::Lord(m) => m.param_counts().0,
        _ => 0,
    };
    format!("group,count\ndecoder,{dec}\nrest,{}\n", total - dec)
}

/// Trains every seed, writing per-seed reports, checkpoints and the aggregate metrics.
pub fn cmd_train(cfg: &RunConfig) -> Result<MetricReport> {
    cfg.validate()?;
    let (ds, norm) = load(cfg)?;
    let (lo, hi) = stream_depths(cfg);
    let prep = prepare_dataset(&ds, cfg.p, lo, hi)?;
    let sp = splits(&prep)?;
    write(&cfg.out.join("run.conf"), &cfg.to_text())?;

    let mut runs = Vec::new();
    let mut counts = None;
    for &seed in &cfg.seeds {
        let dir = cfg.out.join(format!("seed-{seed}"));
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        let (model, report) = match train_seed(cfg, &ds, &norm, &sp, seed, &dir) {
            Ok(v) => v,
            Err(e) if e.downcast_ref::<lordsig::lord::LordError>().is_some_and(|e| e.is_divergence()) => {
                log::warn!("seed {seed}: {e:#}");
                write(&dir.join("error.txt"), &format!("{e:#}\n"))?;
                continue;
            }
            Err(e) => return Err(e.context(format!("seed {seed}"))),
        };
        write(&dir.join("report.csv"), &report.to_csv())?;
        if let Some(d) = &report.diverged {
            log::warn!("seed {seed}: {d}");
            write(&dir.join("error.txt"), &format!("{d}\n"))?;
            continue;
        }
        write_model_checkpoint(
            &model,
            CheckpointContent::Inference,
            checkpoint_extra(cfg, &norm, seed),
            create(&dir.join("inference.ckpt"))?,
        )?;
        let metrics = evaluate(&model, &sp.test, &cfg.solver).with_context(|| format!("seed {seed}: evaluating"))?;
        write(&dir.join("metrics.csv"), &MetricReport::aggregate(&[(seed, metrics.clone())]).to_csv())?;
        counts.get_or_insert_with(|| param_counts_csv(&model));
        runs.push((seed, metrics));
    }
    if runs.is_empty() {
        bail!("every seed diverged; see {}/seed-*/error.txt", cfg.out.display());
    }
    let report = MetricReport::aggregate(&runs);
    write(&cfg.out.join("metrics.csv"), &report.to_csv())?;
    write(&cfg.out.join("params.csv"), &counts.unwrap_or_default())?;
    for m in &report.metrics {
        println!("{}: {} ± {}", m.name, m.mean, m.std);
    }
    Ok(report)
}

fn read_model(file: &Path) -> Result<(AnyModel, ModelMeta)> {
    let f = fs::File::open(file).with_context(|| format!("opening checkpoint {}", file.display()))?;
    let ckpt = read_checkpoint(f).with_context(|| format!("reading checkpoint {}", file.display()))?;
    AnyModel::from_checkpoint(&ckpt).with_context(|| format!("checkpoint {}", file.display()))
}

struct CheckpointRun {
    p: usize,
    seed: u64,
    split_seed: u64,
    solver: SolverConfig,
    norm: Normalization,
}

fn checkpoint_run(meta: &ModelMeta, file: &Path) -> Result<CheckpointRun> {
    let e = &meta.extra;
    let field = |k: &str| e.get(k).cloned().ok_or_else(|| anyhow!("{}: checkpoint header lacks {k:?}", file.display()));
    let parse = |k: &str| -> Result<serde_json::Value> { field(k) };
    Ok(CheckpointRun {
        p: serde_json::from_value(parse("p")?)?,
        seed: serde_json::from_value(parse("seed")?)?,
        split_seed: serde_json::from_value(parse("split_seed")?)?,
        solver: serde_json::from_value(parse("solver")?)?,
        norm: serde_json::from_value(parse("normalization")?)?,
    })
}

/// Loads the dataset with a checkpoint's split and normalization.
fn load_for_checkpoint(cfg: &RunConfig, meta: &ModelMeta, run: &CheckpointRun) -> Result<Dataset> {
    let root = cfg.dataset.as_ref().ok_or_else(|| anyhow!("no dataset given (use --dataset)"))?;
    let hint = match meta.task {
        lordsig::path::TaskKind::Classification { .. } => TaskHint::Classification,
        lordsig::path::TaskKind::Regression => TaskHint::Regression,
    };
    let mut ds = load_dataset(root, &LoadOptions { task: hint, split_seed: run.split_seed })
        .with_context(|| format!("loading dataset {}", root.display()))?;
    run.norm.apply(&mut ds).with_context(|| format!("dataset {}", root.display()))?;
    if ds.dim() != meta.channels {
        bail!("dataset {} has {} channels with time, checkpoint expects {}", root.display(), ds.dim(), meta.channels);
    }
    Ok(ds)
}

/// Scores an inference checkpoint on the test split.
pub fn cmd_eval(cfg: &RunConfig, checkpoint: &Path, solver: Option<SolverConfig>) -> Result<MetricReport> {
    let (model, meta) = read_model(checkpoint)?;
    if meta.content == CheckpointContent::Encoder {
        bail!("{}: an encoder checkpoint cannot make predictions", checkpoint.display());
    }
    let run = checkpoint_run(&meta, checkpoint)?;
    let ds = load_for_checkpoint(cfg, &meta, &run)?;
    let (lo, _) = match meta.model {
        lordsig::lord::ModelKind::Lord => (meta.config.d1, None::<usize>),
        lordsig::lord::ModelKind::Nrde { depth } | lordsig::lord::ModelKind::DeNrde { depth, .. } => (depth, None),
    };
    let prep = prepare_dataset(&ds, run.p, lo, None)?;
    let test = split_of(&prep, Split::Test);
    if test.is_empty() {
        bail!("the test split is empty");
    }
    let solver = solver.unwrap_or(run.solver);
    let metrics = evaluate(&model, &test, &solver)?;
    let report = MetricReport::aggregate(&[(run.seed, metrics)]);
    write(&cfg.out.join("eval.csv"), &report.to_csv())?;
    for m in &report.metrics {
        println!("{}: {}", m.name, m.mean);
    }
    Ok(report)
}

/// Runs `cmd_train` once per value of `axis` and tabulates the aggregates.
pub fn cmd_sweep(cfg: &RunConfig, axis: &str, values: &[String]) -> Result<String> {
    let key = canonical_key(axis);
    if !SWEEPABLE.contains(&key.as_str()) {
        bail!("unknown sweep axis {axis:?}; valid axes: {}", SWEEPABLE.join(", "));
    }
    if values.is_empty() {
        bail!("--values is empty");
    }
    let mut table: Option<String> = None;
    for v in values {
        let mut run = cfg.clone();
        run.set(&key, v).map_err(|e| anyhow!("--values: {e}"))?;
        run.out = cfg.out.join(format!("{key}={v}"));
        let report = cmd_train(&run).with_context(|| format!("{key} = {v}"))?;
        let t = table.get_or_insert_with(|| {
            let cols: Vec<String> =
                report.metrics.iter().flat_map(|m| [format!("{}_mean", m.name), format!("{}_std", m.name)]).collect();
            format!("{key},{}\n", cols.join(","))
        });
        let cells: Vec<String> = report.metrics.iter().flat_map(|m| [m.mean.to_string(), m.std.to_string()]).collect();
        writeln!(t, "{v},{}", cells.join(",")).unwrap();
    }
    let table = table.unwrap_or_default();
    write(&cfg.out.join("sweep.csv"), &table)?;
    print!("{table}");
    Ok(table)
}

/// PCA of the test split's depth-D1 and depth-D2 log-signatures and the
/// encoder's embedding increments.
pub fn cmd_export_pca(cfg: &RunConfig, checkpoint: &Path) -> Result<PathBuf> {
    let (model, meta) = read_model(checkpoint)?;
    let AnyModel::Lord(model) = model else {
        bail!("{}: PCA export needs a LORD encoder checkpoint", checkpoint.display());
    };
    let run = checkpoint_run(&meta, checkpoint)?;
    let ds = load_for_checkpoint(cfg, &meta, &run)?;
    let prep = prepare_dataset(&ds, run.p, meta.config.d1, Some(meta.config.d2))?;
    let test = split_of(&prep, Split::Test);
    if test.is_empty() {
        bail!("the test split is empty");
    }
    let mut points = Vec::new();
    for s in &test {
        let hi = s.hi()?;
        let de = model.embedding_increments(s, &run.solver).with_context(|| format!("sample {}", s.id))?;
        for i in 0..s.lo.len() {
            points.push((PointSource::LogsigD1, s.lo.entry(i).to_vec()));
            points.push((PointSource::LogsigD2, hi.entry(i).to_vec()));
            points.push((PointSource::De, de[i].clone()));
        }
    }
    points.sort_by_key(|p| p.0);
    let pca = pca_export(&points)?;
    let file = cfg.out.join("pca.csv");
    write(&file, &pca.to_csv())?;
    let mut summary = String::from("component,eigenvalue,explained_variance_ratio\n");
    for k in 0..2 {
        writeln!(summary, "pc{},{},{}", k + 1, pca.eigenvalues[k], pca.explained_variance_ratio[k]).unwrap();
    }
    write(&cfg.out.join("pca_summary.csv"), &summary)?;
    println!("wrote {} points to {}", pca.projections.len(), file.display());
    Ok(file)
}

/// Generates one of the synthetic datasets on disk.
pub fn cmd_synth(kind: &str, out: &Path, seed: u64, length: usize) -> Result<()> {
    let spec = PathSpec { length, ..PathSpec::default() };
    let ds = match kind {
        "levy-area" => levy_area_dataset(300, 100, 100, &spec, seed),
        "logsig-functional" => logsig_functional_dataset(200, &spec, seed, seed.wrapping_add(1)),
        other => bail!("unknown synthetic dataset {other:?}; expected levy-area or logsig-functional"),
    };
    write_dataset(&ds, out).with_context(|| format!("writing {}", out.display()))?;
    println!("wrote {} samples to {}", ds.samples.len(), out.display());
    Ok(())
}
