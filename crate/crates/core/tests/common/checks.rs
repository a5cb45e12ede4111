//! Numerical checks with hand-written oracles, shared by the focused tests
//! and the acceptance suite. Each returns the measured quantity so callers
//! can apply (and print) their own tolerance.

use lordsig::lord::{
    batch_gradients, prepare_sample, record_task_sample, LordConfig, LordModel, NetSpec, PreparedSample, Predictor,
};
use lordsig::nn::{vf_init, Gradients, ParamStore, Tape, Var, VfShape};
use lordsig::ode::{integrate_on_tape, integrate_rde, integrate_with_grad, stream_inputs, Method, SolverConfig};
use lordsig::path::{logsig_stream, plan_windows, Sample, Split, Target, TaskKind, TimeSeriesPath};
use lordsig::tensoralg::LyndonBasis;

use super::{max_abs_diff, random_points, rng};

pub const FD_STEP: f64 = 1e-5;

/// `|a - n| / max(|a|, |n|, 1e-6)`. The floor sits above central-difference
/// cancellation noise (about `1e-16 * loss / FD_STEP`) for O(1) losses.
pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

/// Worst relative error between `analytic` and central differences of `loss`
/// over every scalar parameter in `store`.
pub fn fd_worst(store: &ParamStore, analytic: &Gradients, loss: impl Fn(&ParamStore) -> f64) -> (usize, f64) {
    let mut worst = 0.0f64;
    let mut checked = 0;
    for id in store.ids() {
        for k in 0..store.data(id).len() {
            let mut plus = store.clone();
            plus.data_mut(id)[k] += FD_STEP;
            let mut minus = store.clone();
            minus.data_mut(id)[k] -= FD_STEP;
            let numeric = (loss(&plus) - loss(&minus)) / (2.0 * FD_STEP);
            worst = worst.max(rel_err(analytic.get(id)[k], numeric));
            checked += 1;
        }
    }
    (checked, worst)
}

/// Standalone vector-field losses: a squared norm of `field(v) u` and a
/// cross-entropy on the flattened field output.
pub fn fd_mlp() -> (usize, f64) {
    let shape = VfShape { in_dim: 3, width: 5, hidden_layers: 2, out_rows: 2, out_cols: 3 };
    let (store, net) = vf_init(shape, 11).unwrap();
    let v = vec![0.4, -0.7, 0.2];
    let u = vec![1.1, -0.3, 0.5];
    let record = |tape: &mut Tape<'_>| -> Var {
        let x = tape.input(v.clone());
        let c = tape.input(u.clone());
        let y = net.record_apply(tape, x, c);
        let a = tape.sq_norm(y);
        let logits = net.record(tape, x);
        let b = tape.softmax_ce(logits, 4);
        tape.add(a, b)
    };
    let value = |s: &ParamStore| {
        let mut t = Tape::new(s);
        let l = record(&mut t);
        t.scalar(l)
    };
    let mut tape = Tape::new(&store);
    let l = record(&mut tape);
    let g = tape.backward(l).unwrap();
    fd_worst(&store, &g.params, value)
}

fn smooth_sample(id: &str, n: usize, phase: f64, target: Target) -> Sample {
    let times: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
    let values = times.iter().map(|t| vec![(3.0 * t + phase).sin(), (2.0 * t - phase).cos() * 0.5]).collect();
    Sample { id: id.into(), path: TimeSeriesPath::new(times, values).unwrap(), target, split: Split::Train }
}

/// A two-window depth-2 NRDE integrated with euler; parameters and initial
/// state are checked against central differences of `||z(T)||^2`.
pub fn fd_nrde() -> (usize, f64) {
    fd_nrde_with(SolverConfig::new(Method::Euler, 2))
}

pub fn fd_nrde_with(cfg: SolverConfig) -> (usize, f64) {
    let s = smooth_sample("a", 5, 0.3, Target::Value(0.0));
    let basis = LyndonBasis::new(3, 2);
    let plan = plan_windows(&s.path, 3).unwrap();
    assert_eq!(plan.len(), 2);
    let stream = logsig_stream(&s.path, &plan, &basis).unwrap();
    let shape = VfShape { in_dim: 3, width: 5, hidden_layers: 2, out_rows: 3, out_cols: basis.len() };
    let (store, net) = vf_init(shape, 5).unwrap();
    let z0 = vec![0.2, -0.1, 0.4];
    let loss = |st: &ParamStore, z: &[f64]| {
        let t = integrate_rde(&net, st, z, &stream, &cfg).unwrap();
        t.last().iter().map(|x| x * x).sum::<f64>()
    };
    let g = integrate_with_grad(&net, &store, &z0, &stream, &cfg, |tape, z| tape.sq_norm(z)).unwrap();
    let (mut n, mut worst) = fd_worst(&store, &g.params, |st| loss(st, &z0));
    for k in 0..z0.len() {
        let (mut p, mut m) = (z0.clone(), z0.clone());
        p[k] += FD_STEP;
        m[k] -= FD_STEP;
        let numeric = (loss(&store, &p) - loss(&store, &m)) / (2.0 * FD_STEP);
        worst = worst.max(rel_err(g.z0[k], numeric));
        n += 1;
    }
    (n, worst)
}

/// The tiny LORD model of the gradient checks: `d = 3`, `D1 = 1`, `D2 = 2`,
/// embedding 3, hidden 4, two windows, euler with two steps.
pub fn tiny_lord() -> (LordModel, Vec<PreparedSample>, SolverConfig) {
    let cfg = LordConfig {
        d1: 1,
        d2: 2,
        embed_dim: Some(3),
        hidden_dim: 4,
        f: NetSpec::new(5, 2),
        g: NetSpec::new(5, 2),
        o: NetSpec::new(5, 2),
        c_ae: 1e-3,
        c_e: 0.5,
        c_task: 1e-3,
        ..LordConfig::default()
    };
    let task = TaskKind::Classification { classes: 2 };
    let model = LordModel::build(cfg, 3, task, 21).unwrap();
    let lo = LyndonBasis::new(3, 1);
    let hi = LyndonBasis::new(3, 2);
    let samples = [(0.3, 0), (1.4, 1)]
        .iter()
        .enumerate()
        .map(|(i, &(ph, c))| {
            let s = smooth_sample(&format!("{i}"), 5, ph, Target::Class(c));
            prepare_sample(&s, 3, &lo, Some(&hi)).unwrap()
        })
        .collect();
    (model, samples, SolverConfig::new(Method::Euler, 2))
}

fn with_store(model: &LordModel, store: &ParamStore) -> LordModel {
    LordModel { store: store.clone(), ..model.clone() }
}

fn add_l2(grads: &mut Gradients, store: &ParamStore, ids: &[lordsig::nn::ParamId], c: f64) {
    for &id in ids {
        for (g, t) in grads.get_mut(id).iter_mut().zip(store.data(id)) {
            *g += 2.0 * c * t;
        }
    }
}

fn l2(store: &ParamStore, ids: &[lordsig::nn::ParamId]) -> f64 {
    ids.iter().flat_map(|&id| store.data(id)).map(|x| x * x).sum()
}

/// Full `L_AE` (reconstruction, embedding penalty and L2) over the batch.
pub fn fd_lord_ae() -> (usize, f64) {
    let (model, samples, solver) = tiny_lord();
    let batch: Vec<&PreparedSample> = samples.iter().collect();
    let mut ae_ids = model.encoder_params();
    ae_ids.extend(model.decoder_params());
    let (_, mut grads) = batch_gradients(&model, &batch, &solver, &|m: &LordModel, t: &mut Tape<'_>, s, sv| {
        m.record_ae_sample(t, s, sv)
    })
    .unwrap();
    add_l2(&mut grads, &model.store, &ae_ids, model.config.c_ae);
    fd_worst(&model.store, &grads, |st| {
        let m = with_store(&model, st);
        batch.iter().map(|s| m.ae_loss(s, &solver).unwrap()).sum::<f64>() / batch.len() as f64
    })
}

/// Full `L_TASK` (cross-entropy and L2 on the main group) over the batch.
pub fn fd_lord_task() -> (usize, f64) {
    let (model, samples, solver) = tiny_lord();
    let batch: Vec<&PreparedSample> = samples.iter().collect();
    let main = model.main_group();
    let per_sample = |m: &LordModel, t: &mut Tape<'_>, s: &PreparedSample, sv: &SolverConfig| {
        let out = m.record_output(t, s, sv)?;
        record_task_sample(t, m.task, out, s)
    };
    let (_, mut grads) = batch_gradients(&model, &batch, &solver, &per_sample).unwrap();
    add_l2(&mut grads, &model.store, &main, model.config.c_task);
    fd_worst(&model.store, &grads, |st| {
        let m = with_store(&model, st);
        let data: f64 = batch
            .iter()
            .map(|s| {
                let mut t = Tape::new(&m.store);
                let l = per_sample(&m, &mut t, s, &solver).unwrap();
                t.scalar(l)
            })
            .sum::<f64>()
            / batch.len() as f64;
        data + m.config.c_task * l2(st, &main)
    })
}

/// Final-state error of `dz = a z dX`, `X(t) = t` on `[0, 1]`, against `e^a`.
fn linear_error(method: Method, steps: usize) -> f64 {
    let a = 1.0;
    let store = ParamStore::new();
    let mut tape = Tape::new(&store);
    let z0 = tape.input(vec![1.0]);
    let inc = tape.input(vec![1.0]);
    let traj = integrate_on_tape(&mut tape, vec![z0], &[inc], &[0.0, 1.0], &SolverConfig::new(method, steps), false, |t, s, u| {
        let zu = t.matvec(s[0], 1, 1, u);
        vec![t.scale(zu, a)]
    })
    .unwrap();
    (tape.scalar(traj.last()[0]) - a.exp()).abs()
}

/// Error ratios under step halving for euler (16 -> 32 steps) and rk4 (4 -> 8).
pub fn order_ratios() -> (f64, f64) {
    let euler = linear_error(Method::Euler, 16) / linear_error(Method::Euler, 32);
    let rk4 = linear_error(Method::Rk4, 4) / linear_error(Method::Rk4, 8);
    (euler, rk4)
}

/// A field with zero weights and bias `c` integrates to `z0 + c * sum(L_i)`.
pub fn constant_field_error() -> f64 {
    let shape = VfShape { in_dim: 2, width: 4, hidden_layers: 2, out_rows: 2, out_cols: 3 };
    let (mut store, net) = vf_init(shape, 2).unwrap();
    for id in net.params() {
        store.data_mut(id).iter_mut().for_each(|x| *x = 0.0);
    }
    let c = [0.5, -1.0, 2.0, 0.25, 0.0, -0.75];
    store.data_mut(net.layers[2].bias).copy_from_slice(&c);
    let mut r = rng(8);
    let pts = random_points(&mut r, 2, 13);
    let times: Vec<f64> = (0..13).map(|i| i as f64 * 0.3).collect();
    let path = TimeSeriesPath::new(times, pts).unwrap();
    let plan = plan_windows(&path, 4).unwrap();
    let stream = logsig_stream(&path, &plan, &LyndonBasis::new(3, 1)).unwrap();
    let total: Vec<f64> = (0..3).map(|j| (0..stream.len()).map(|i| stream.entry(i)[j]).sum()).collect();
    let z0 = [0.1, -0.2];
    let expect: Vec<f64> = (0..2).map(|r| z0[r] + (0..3).map(|j| c[r * 3 + j] * total[j]).sum::<f64>()).collect();
    let mut worst = 0.0f64;
    for method in [Method::Euler, Method::Midpoint, Method::Rk4] {
        for steps in [1, 3, 5] {
            let t = integrate_rde(&net, &store, &z0, &stream, &SolverConfig::new(method, steps)).unwrap();
            worst = worst.max(max_abs_diff(t.last(), &expect));
        }
    }
    worst
}

/// Depth-1 NRDE with one euler step per observation against a direct euler
/// loop for the controlled equation driven by the linearly interpolated path.
/// `collinear` uses windows of 5 observations on data that is linear inside
/// each window; otherwise every window is a single segment.
pub fn ncde_equivalence(collinear: bool) -> f64 {
    let n = 41;
    let mut r = rng(if collinear { 4 } else { 3 });
    let raw = if collinear {
        // Piecewise-linear with kinks only at every fourth observation.
        let knots = random_points(&mut r, 2, n / 4 + 1);
        (0..n)
            .map(|i| {
                let (k, f) = (i / 4, (i % 4) as f64 / 4.0);
                let next = &knots[(k + 1).min(knots.len() - 1)];
                knots[k].iter().zip(next).map(|(a, b)| a + f * (b - a)).collect()
            })
            .collect()
    } else {
        random_points(&mut r, 2, n)
    };
    let times: Vec<f64> = (0..n).map(|i| i as f64 * 0.05).collect();
    let path = TimeSeriesPath::new(times, raw).unwrap();
    let (p, steps) = if collinear { (5, 4) } else { (2, 1) };
    let plan = plan_windows(&path, p).unwrap();
    let stream = logsig_stream(&path, &plan, &LyndonBasis::new(3, 1)).unwrap();
    let shape = VfShape { in_dim: 4, width: 8, hidden_layers: 2, out_rows: 4, out_cols: 3 };
    let (store, net) = vf_init(shape, 6).unwrap();
    let z0 = vec![0.3, -0.2, 0.1, 0.0];
    let nrde = integrate_rde(&net, &store, &z0, &stream, &SolverConfig::new(Method::Euler, steps)).unwrap();

    let mut z = z0.clone();
    let mut worst = 0.0f64;
    let mut boundary = 1;
    for i in 0..n - 1 {
        let dx: Vec<f64> = path.point(i + 1).iter().zip(path.point(i)).map(|(a, b)| a - b).collect();
        let dz = net.forward(&store, &z).unwrap().mul_vec(&dx);
        z.iter_mut().zip(dz).for_each(|(a, b)| *a += b);
        if (i + 1) % (p - 1) == 0 || i + 1 == n - 1 {
            worst = worst.max(max_abs_diff(&nrde.states[boundary], &z));
            boundary += 1;
        }
    }
    assert_eq!(boundary, nrde.states.len());
    worst
}

/// `z(T)` from the stacked `(z, e)` integration against a first pass over
/// `e` that records every stage increment `f(e) u` and a second pass over `z`
/// driven by the replayed increments. Returns the worst gap over all methods.
pub fn stacked_vs_two_pass() -> f64 {
    let cfg = LordConfig { hidden_dim: 4, f: NetSpec::new(6, 2), g: NetSpec::new(6, 2), o: NetSpec::new(6, 2), ..LordConfig::default() };
    let m = LordModel::build(cfg, 3, TaskKind::Regression, 9).unwrap();
    let s = smooth_sample("s", 17, 1.3, Target::Value(0.0));
    let sample = prepare_sample(&s, 5, &LyndonBasis::new(3, 1), Some(&LyndonBasis::new(3, 2))).unwrap();
    let mut worst = 0.0f64;
    for method in [Method::Euler, Method::Midpoint, Method::Rk4] {
        let solver = SolverConfig::new(method, 3);
        let mut tape = Tape::new(&m.store);
        let rec = m.record_autoencoder(&mut tape, &sample, &solver, true, false).unwrap();
        let stacked = tape.value(rec.z_final.unwrap()).to_vec();

        let mut tape = Tape::new(&m.store);
        let x0 = tape.input(sample.x0.clone());
        let e0 = m.phi_e.record(&mut tape, x0);
        let incs = stream_inputs(&mut tape, &sample.lo);
        let mut stages: Vec<Var> = Vec::new();
        integrate_on_tape(&mut tape, vec![e0], &incs, sample.lo.boundaries(), &solver, false, |t, st, u| {
            let de = m.f.record_apply(t, st[0], u);
            stages.push(de);
            vec![de]
        })
        .unwrap();
        let z0 = m.phi_z.record(&mut tape, x0);
        let mut next = stages.into_iter();
        let traj = integrate_on_tape(&mut tape, vec![z0], &incs, sample.lo.boundaries(), &solver, false, |t, st, _| {
            vec![m.g.record_apply(t, st[0], next.next().unwrap())]
        })
        .unwrap();
        worst = worst.max(max_abs_diff(&stacked, tape.value(traj.last()[0])));
    }
    worst
}
