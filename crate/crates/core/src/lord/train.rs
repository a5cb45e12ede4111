use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::eval::{classification_metrics, regression_metrics};
use crate::nn::{softmax, Adam, Gradients, ParamId, ParamStore, Tape, Var};
use crate::ode::SolverConfig;
use crate::path::{TaskKind, Target};

use super::{record_task_sample, LordConfig, LordError, LordModel, PreparedSample, Predictor, TrainingMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Pretrain,
    Main,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Pretrain => "pretrain",
            Phase::Main => "main",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub iter: usize,
    pub phase: Phase,
    /// Mini-batch objective evaluated before this iteration's update.
    pub loss: Option<f64>,
    pub val_metric: Option<f64>,
}

/// Loss and validation history of one seeded run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    pub seed: u64,
    pub rows: Vec<ReportRow>,
    /// Main-phase iteration whose parameters were kept.
    pub best_iter: Option<usize>,
    pub best_metric: Option<f64>,
    /// Set when training stopped on a non-finite value.
    pub diverged: Option<String>,
}

impl TrainReport {
    pub fn new(seed: u64) -> Self {
        Self { seed, ..Self::default() }
    }

    pub fn losses(&self, phase: Phase) -> Vec<f64> {
        self.rows.iter().filter(|r| r.phase == phase).filter_map(|r| r.loss).collect()
    }

    pub fn val_history(&self) -> Vec<(usize, f64)> {
        self.rows.iter().filter_map(|r| r.val_metric.map(|v| (r.iter, v))).collect()
    }

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
        let mut out = String::from("iter,phase,loss,val_metric\n");
        for r in &self.rows {
            writeln!(out, "{},{},{},{}", r.iter, r.phase.as_str(), opt(r.loss), opt(r.val_metric)).unwrap();
        }
        out
    }
}

/// Draws mini-batches from a reshuffled permutation; the whole split when it
/// is no larger than the batch size.
struct Batcher {
    order: Vec<usize>,
    pos: usize,
    rng: ChaCha8Rng,
}

impl Batcher {
    fn new(n: usize, seed: u64) -> Self {
        let mut b = Self { order: (0..n).collect(), pos: 0, rng: ChaCha8Rng::seed_from_u64(seed) };
        b.order.shuffle(&mut b.rng);
        b
    }

    fn next(&mut self, batch: usize) -> Vec<usize> {
        let n = self.order.len();
        if batch >= n {
            return (0..n).collect();
        }
        if self.pos + batch > n {
            self.order.shuffle(&mut self.rng);
            self.pos = 0;
        }
        let out = self.order[self.pos..self.pos + batch].to_vec();
        self.pos += batch;
        out
    }
}

/// Mean per-sample loss and its parameter gradient over `batch`.
///
/// Samples run in parallel; results are reduced in batch order so the sum is
/// independent of scheduling.
pub fn batch_gradients<M, F>(
    model: &M,
    batch: &[&PreparedSample],
    solver: &SolverConfig,
    per_sample: &F,
) -> Result<(f64, Gradients), LordError>
where
    M: Predictor,
    F: Fn(&M, &mut Tape<'_>, &PreparedSample, &SolverConfig) -> Result<Var, LordError> + Sync,
{
    let results: Vec<Result<(f64, Gradients), LordError>> = batch
        .par_iter()
        .map(|s| {
            let wrap = |e: LordError| LordError::Sample { id: s.id.clone(), source: Box::new(e) };
            let mut tape = Tape::new(model.store());
            let loss = per_sample(model, &mut tape, s, solver).map_err(wrap)?;
            let grads = tape.backward(loss).map_err(|e| wrap(e.into()))?;
            Ok((tape.scalar(loss), grads.params))
        })
        .collect();
    let mut total = 0.0;
    let mut grads = model.store().zero_grads();
    for r in results {
        let (l, g) = r?;
        total += l;
        grads.add_assign(&g);
    }
    let inv = 1.0 / batch.len() as f64;
    grads.scale(inv);
    Ok((total * inv, grads))
}

/// Adds `c * ||theta||^2` for each group to the loss and its gradient.
fn add_penalties(store: &ParamStore, penalties: &[(Vec<ParamId>, f64)], loss: &mut f64, grads: &mut Gradients) {
    for (ids, c) in penalties {
        if *c == 0.0 {
            continue;
        }
        for &id in ids {
            let theta = store.data(id);
            *loss += c * theta.iter().map(|x| x * x).sum::<f64>();
            grads.get_mut(id).iter_mut().zip(theta).for_each(|(g, t)| *g += 2.0 * c * t);
        }
    }
}

/// Network outputs per sample: class probabilities, or a single value.
pub fn predict<M: Predictor>(model: &M, samples: &[&PreparedSample], solver: &SolverConfig) -> Result<Vec<Vec<f64>>, LordError> {
    samples
        .par_iter()
        .map(|s| {
            let mut tape = Tape::new(model.store());
            let out = model
                .record_output(&mut tape, s, solver)
                .map_err(|e| LordError::Sample { id: s.id.clone(), source: Box::new(e) })?;
            let v = tape.value(out);
            Ok(match model.task() {
                TaskKind::Classification { .. } => softmax(v),
                TaskKind::Regression => v.to_vec(),
            })
        })
        .collect()
}

/// Named test metrics for `samples`.
pub fn evaluate<M: Predictor>(model: &M, samples: &[&PreparedSample], solver: &SolverConfig) -> Result<Vec<(String, f64)>, LordError> {
    let preds = predict(model, samples, solver)?;
    let named: Vec<(&str, f64)> = match model.task() {
        TaskKind::Classification { .. } => {
            let labels = samples.iter().map(|s| s.target.class().ok_or(LordError::TargetKind)).collect::<Result<Vec<_>, _>>()?;
            let m = classification_metrics(&labels, &preds)?;
            for w in &m.warnings {
                log::warn!("{w}");
            }
            m.named()
        }
        TaskKind::Regression => {
            let y: Vec<f64> = samples.iter().map(|s| s.target.value()).collect();
            let y_hat: Vec<f64> = preds.iter().map(|p| p[0]).collect();
            regression_metrics(&y, &y_hat)?.named()
        }
    };
    Ok(named.into_iter().map(|(n, v)| (n.to_string(), v)).collect())
}

/// Accuracy for classification, R^2 for regression. A diverging forward pass scores NaN.
pub fn validation_metric<M: Predictor>(model: &M, val: &[&PreparedSample], solver: &SolverConfig) -> Result<f64, LordError> {
    let preds = match predict(model, val, solver) {
        Ok(p) => p,
        Err(e) if e.is_divergence() => return Ok(f64::NAN),
        Err(e) => return Err(e),
    };
    Ok(match model.task() {
        TaskKind::Classification { .. } => {
            let hits = val
                .iter()
                .zip(&preds)
                .filter(|(s, p)| matches!(s.target, Target::Class(c) if c == crate::eval::argmax(p)))
                .count();
            hits as f64 / val.len() as f64
        }
        TaskKind::Regression => {
            let y: Vec<f64> = val.iter().map(|s| s.target.value()).collect();
            let y_hat: Vec<f64> = preds.iter().map(|p| p[0]).collect();
            match regression_metrics(&y, &y_hat) {
                Ok(m) => m.r2,
                Err(_) => f64::NAN,
            }
        }
    })
}

struct Objective<'a, F> {
    phase: Phase,
    iters: usize,
    trainable: Vec<ParamId>,
    penalties: Vec<(Vec<ParamId>, f64)>,
    per_sample: F,
    /// Validation split for best-parameter selection (main phase only).
    val: Option<&'a [&'a PreparedSample]>,
}

fn batch_seed(seed: u64, phase: Phase) -> u64 {
    let salt = match phase {
        Phase::Pretrain => 0x5EED_0001,
        Phase::Main => 0x5EED_0002,
    };
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ salt
}

fn optimize<M, F>(
    model: &mut M,
    train: &[&PreparedSample],
    cfg: &LordConfig,
    solver: &SolverConfig,
    seed: u64,
    obj: Objective<'_, F>,
    report: &mut TrainReport,
) -> Result<(), LordError>
where
    M: Predictor,
    F: Fn(&M, &mut Tape<'_>, &PreparedSample, &SolverConfig) -> Result<Var, LordError> + Sync,
{
    let mut adam = Adam::new(model.store(), cfg.lr);
    let mut batcher = Batcher::new(train.len(), batch_seed(seed, obj.phase));
    let mut best: Option<(usize, f64, ParamStore)> = None;

    let validate = |model: &M, iter: usize, best: &mut Option<(usize, f64, ParamStore)>| -> Result<Option<f64>, LordError> {
        let Some(val) = obj.val else { return Ok(None) };
        let metric = validation_metric(model, val, solver)?;
        let better = match best {
            None => true,
            Some((_, b, _)) => metric > *b || (b.is_nan() && !metric.is_nan()),
        };
        if better {
            *best = Some((iter, metric, model.store().clone()));
        }
        Ok(Some(metric))
    };

    if obj.val.is_some() {
        let metric = validate(model, 0, &mut best)?;
        report.rows.push(ReportRow { iter: 0, phase: obj.phase, loss: None, val_metric: metric });
    }

    for iter in 1..=obj.iters {
        let batch: Vec<&PreparedSample> = batcher.next(cfg.batch_size).into_iter().map(|i| train[i]).collect();
        let step = batch_gradients(&*model, &batch, solver, &obj.per_sample).and_then(|(mut loss, mut grads)| {
            add_penalties(model.store(), &obj.penalties, &mut loss, &mut grads);
            if !loss.is_finite() || !grads.max_abs().is_finite() {
                return Err(LordError::Ode(crate::ode::OdeError::Divergence { time: f64::NAN }));
            }
            Ok((loss, grads))
        });
        let (loss, grads) = match step {
            Ok(v) => v,
            Err(e) if e.is_divergence() => {
                let last = iter - 1;
                log::warn!("{} diverged at iteration {iter}: {e}", obj.phase.as_str());
                report.diverged = Some(format!("{} iteration {iter} (last finite iteration {last}): {e}", obj.phase.as_str()));
                break;
            }
            Err(e) => return Err(e),
        };
        adam.step(model.store_mut(), &grads, &obj.trainable);
        let val_metric = if iter % cfg.val_every == 0 || iter == obj.iters {
            validate(model, iter, &mut best)?
        } else {
            None
        };
        report.rows.push(ReportRow { iter, phase: obj.phase, loss: Some(loss), val_metric });
    }

    if let Some((iter, metric, store)) = best {
        *model.store_mut() = store;
        report.best_iter = Some(iter);
        report.best_metric = Some(metric);
    }
    Ok(())
}

/// Pre-trains the autoencoder on `L_AE`, updating only the encoder, decoder
/// and their initial-value maps.
pub fn pretrain(model: &mut LordModel, train: &[&PreparedSample], solver: &SolverConfig, seed: u64) -> Result<TrainReport, LordError> {
    if !model.config.mode.pretrains() {
        return Err(LordError::Config(format!("mode {} has no pre-training phase", model.config.mode.as_str())));
    }
    if train.is_empty() {
        return Err(LordError::EmptySplit("train"));
    }
    let mut ae = model.encoder_params();
    ae.extend(model.decoder_params());
    let cfg = model.config.clone();
    let obj = Objective {
        phase: Phase::Pretrain,
        iters: cfg.max_iter_ae,
        trainable: ae.clone(),
        penalties: vec![(ae, cfg.c_ae)],
        per_sample: |m: &LordModel, tape: &mut Tape<'_>, s: &PreparedSample, solver: &SolverConfig| m.record_ae_sample(tape, s, solver),
        val: None,
    };
    let mut report = TrainReport::new(seed);
    optimize(model, train, &cfg, solver, seed, obj, &mut report)?;
    Ok(report)
}

fn task_objective<M: Predictor>(m: &M, tape: &mut Tape<'_>, s: &PreparedSample, solver: &SolverConfig) -> Result<Var, LordError> {
    let out = m.record_output(tape, s, solver)?;
    record_task_sample(tape, m.task(), out, s)
}

/// Main-phase training according to the configured mode, keeping the
/// parameters with the best validation metric.
pub fn train_main(
    model: &mut LordModel,
    train: &[&PreparedSample],
    val: &[&PreparedSample],
    solver: &SolverConfig,
    seed: u64,
) -> Result<TrainReport, LordError> {
    if train.is_empty() {
        return Err(LordError::EmptySplit("train"));
    }
    if val.is_empty() {
        return Err(LordError::EmptySplit("validation"));
    }
    let cfg = model.config.clone();
    let main = model.main_group();
    let mut report = TrainReport::new(seed);
    match cfg.mode {
        TrainingMode::Lord | TrainingMode::FineTuning => {
            let mut trainable = main.clone();
            if cfg.mode == TrainingMode::FineTuning {
                trainable.extend(model.encoder_params());
            }
            let obj = Objective {
                phase: Phase::Main,
                iters: cfg.max_iter_task,
                trainable,
                penalties: vec![(main, cfg.c_task)],
                per_sample: task_objective::<LordModel>,
                val: Some(val),
            };
            optimize(model, train, &cfg, solver, seed, obj, &mut report)?;
        }
        TrainingMode::CoTrain | TrainingMode::CoTrainWoPre => {
            let mut ae = model.encoder_params();
            ae.extend(model.decoder_params());
            let mut trainable = main.clone();
            trainable.extend(ae.iter().copied());
            let obj = Objective {
                phase: Phase::Main,
                iters: cfg.max_iter_task,
                trainable,
                penalties: vec![(main, cfg.c_task), (ae, cfg.co_train_ae_weight * cfg.c_ae)],
                per_sample: |m: &LordModel, tape: &mut Tape<'_>, s: &PreparedSample, solver: &SolverConfig| {
                    m.record_cotrain_sample(tape, s, solver)
                },
                val: Some(val),
            };
            optimize(model, train, &cfg, solver, seed, obj, &mut report)?;
        }
    }
    Ok(report)
}

/// Trains a baseline's main parameters on the task loss.
pub fn train_supervised<M: Predictor>(
    model: &mut M,
    cfg: &LordConfig,
    train: &[&PreparedSample],
    val: &[&PreparedSample],
    solver: &SolverConfig,
    seed: u64,
) -> Result<TrainReport, LordError> {
    if train.is_empty() {
        return Err(LordError::EmptySplit("train"));
    }
    if val.is_empty() {
        return Err(LordError::EmptySplit("validation"));
    }
    let main = model.main_params();
    let obj = Objective {
        phase: Phase::Main,
        iters: cfg.max_iter_task,
        trainable: main.clone(),
        penalties: vec![(main, cfg.c_task)],
        per_sample: task_objective::<M>,
        val: Some(val),
    };
    let mut report = TrainReport::new(seed);
    optimize(model, train, cfg, solver, seed, obj, &mut report)?;
    Ok(report)
}

/// Builds a model and runs both phases for one seed.
pub fn run_lord(
    cfg: &LordConfig,
    task: TaskKind,
    train: &[&PreparedSample],
    val: &[&PreparedSample],
    solver: &SolverConfig,
    seed: u64,
) -> Result<(LordModel, TrainReport), LordError> {
    let first = train.first().ok_or(LordError::EmptySplit("train"))?;
    let mut model = LordModel::build(cfg.clone(), first.x0.len(), task, seed)?;
    let mut report = TrainReport::new(seed);
    if cfg.mode.pretrains() {
        let pre = pretrain(&mut model, train, solver, seed)?;
        report.rows.extend(pre.rows);
        if pre.diverged.is_some() {
            report.diverged = pre.diverged;
            return Ok((model, report));
        }
    }
    let main = train_main(&mut model, train, val, solver, seed)?;
    report.rows.extend(main.rows);
    report.best_iter = main.best_iter;
    report.best_metric = main.best_metric;
    report.diverged = main.diverged;
    Ok((model, report))
}
