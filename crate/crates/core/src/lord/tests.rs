use super::*;
use crate::nn::{Tape, Var, VectorFieldNet};
use crate::ode::{integrate_on_tape, Method, SolverConfig};
use crate::path::{Sample, Split, Target, TaskKind, TimeSeriesPath};
use crate::tensoralg::{is_lyndon, LyndonBasis};

fn sample(id: &str, n: usize, phase: f64, target: Target, split: Split) -> Sample {
    let times: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
    let values = times
        .iter()
        .map(|t| vec![(3.0 * t + phase).sin(), (2.0 * t - phase).cos() * 0.5])
        .collect();
    Sample { id: id.into(), path: TimeSeriesPath::new(times, values).unwrap(), target, split }
}

fn prepared(n: usize, p: usize, cfg: &LordConfig, phase: f64) -> PreparedSample {
    let s = sample("s", n, phase, Target::Class(1), Split::Train);
    let lo = LyndonBasis::new(3, cfg.d1);
    let hi = LyndonBasis::new(3, cfg.d2);
    prepare_sample(&s, p, &lo, Some(&hi)).unwrap()
}

fn small_cfg() -> LordConfig {
    LordConfig {
        hidden_dim: 4,
        f: NetSpec::new(6, 2),
        g: NetSpec::new(6, 2),
        o: NetSpec::new(6, 2),
        ..LordConfig::default()
    }
}

fn zero_net(model: &mut LordModel, net: &VectorFieldNet) {
    for id in net.params() {
        model.store.data_mut(id).iter_mut().for_each(|x| *x = 0.0);
    }
}

fn euler(steps: usize) -> SolverConfig {
    SolverConfig::new(Method::Euler, steps)
}

/// Lyndon words counted by brute force over all words.
fn brute_logsig_dim(d: usize, depth: usize) -> usize {
    let mut count = 0;
    for len in 1..=depth {
        for code in 0..d.pow(len as u32) {
            let word: Vec<usize> = (0..len).rev().map(|k| code / d.pow(k as u32) % d).collect();
            count += usize::from(is_lyndon(&word));
        }
    }
    count
}

#[test]
fn shape_chain_matches_lyndon_counts() {
    let cfg = LordConfig { embed_dim: Some(3), hidden_dim: 8, ..small_cfg() };
    let m = LordModel::build(cfg, 3, TaskKind::Classification { classes: 2 }, 1).unwrap();
    assert_eq!((m.f.shape.out_rows, m.f.shape.out_cols), (3, brute_logsig_dim(3, 1)));
    assert_eq!((m.g.shape.out_rows, m.g.shape.out_cols), (8, 3));
    assert_eq!((m.o.shape.out_rows, m.o.shape.out_cols), (brute_logsig_dim(3, 2), 3));
    assert_eq!(m.o.shape.out_rows, 6);
    assert!(m.embed_dim() < m.hi_dim());
}

#[test]
fn rejects_non_increasing_depths() {
    let cfg = LordConfig { d1: 2, d2: 2, ..small_cfg() };
    assert!(matches!(LordModel::build(cfg, 3, TaskKind::Regression, 0), Err(LordError::Config(_))));
}

#[test]
fn build_is_deterministic() {
    let a = LordModel::build(small_cfg(), 3, TaskKind::Regression, 7).unwrap();
    let b = LordModel::build(small_cfg(), 3, TaskKind::Regression, 7).unwrap();
    assert_eq!(a.store, b.store);
    let c = LordModel::build(small_cfg(), 3, TaskKind::Regression, 8).unwrap();
    assert_ne!(a.store, c.store);
}

#[test]
fn zero_decoder_reconstructs_nothing() {
    let cfg = small_cfg();
    let mut m = LordModel::build(cfg.clone(), 3, TaskKind::Regression, 3).unwrap();
    let o = m.o.clone();
    zero_net(&mut m, &o);
    let s = prepared(13, 4, &cfg, 0.3);
    let hi = s.hi().unwrap();
    let expected: f64 = (0..hi.len()).map(|i| hi.entry(i).iter().map(|x| x * x).sum::<f64>()).sum::<f64>()
        / (hi.len() - 1) as f64;
    let got = m.recon_loss(&s, &euler(2)).unwrap();
    assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
}

#[test]
fn perfect_single_window_reconstruction() {
    // e stays fixed (f = 0 except a bias that makes de = L), s follows de.
    let cfg = LordConfig { d1: 1, d2: 2, embed_dim: Some(3), ..small_cfg() };
    let mut m = LordModel::build(cfg.clone(), 3, TaskKind::Regression, 3).unwrap();
    let s = prepared(5, 5, &cfg, 0.1);
    assert_eq!(s.lo.len(), 1);
    for net in [m.f.clone(), m.o.clone()] {
        zero_net(&mut m, &net);
    }
    // f(e) = I_3, so de = L^{(1)}.
    let fb = m.f.layers.last().unwrap().bias;
    m.store.data_mut(fb).copy_from_slice(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
    // o(s) = A with A L^{(1)} = L^{(2)}: the level-1 rows copy, the area row
    // is matched by scaling the first channel.
    let hi = s.hi().unwrap().entry(0).to_vec();
    let lo = s.lo.entry(0).to_vec();
    let ob = m.o.layers.last().unwrap().bias;
    let mut a = vec![0.0; 6 * 3];
    for r in 0..3 {
        a[r * 3 + r] = 1.0;
    }
    for r in 3..6 {
        a[r * 3] = hi[r] / lo[0];
    }
    m.store.data_mut(ob).copy_from_slice(&a);
    for method in [Method::Euler, Method::Rk4] {
        let l = m.recon_loss(&s, &SolverConfig::new(method, 3)).unwrap();
        assert!(l < 1e-24, "{l}");
    }
}

#[test]
fn recon_matches_formula_from_boundary_states() {
    let cfg = small_cfg();
    let m = LordModel::build(cfg.clone(), 3, TaskKind::Regression, 5).unwrap();
    let s = prepared(9, 4, &cfg, 0.7);
    assert_eq!(s.lo.len(), 3);
    let solver = SolverConfig::new(Method::Rk4, 2);
    let init = vec![
        m.phi_e.apply(&m.store, &s.x0).unwrap(),
        m.phi_s.apply(&m.store, &m.phi_e.apply(&m.store, &s.x0).unwrap()).unwrap(),
    ];
    let fields = crate::ode::AugmentedFields { g: None, f: &m.f, o: Some(&m.o) };
    let traj = crate::ode::integrate_augmented(fields, &m.store, &s.lo, &init, &solver).unwrap();
    let e_dim = m.embed_dim();
    let hi = s.hi().unwrap();
    let mut sum = 0.0;
    for i in 0..hi.len() {
        let s0 = &traj.states[i][e_dim..];
        let s1 = &traj.states[i + 1][e_dim..];
        sum += (0..s0.len()).map(|k| (s1[k] - s0[k] - hi.entry(i)[k]).powi(2)).sum::<f64>();
    }
    let expected = sum / 2.0;
    let got = m.recon_loss(&s, &solver).unwrap();
    assert!((got - expected).abs() < 1e-12);

    // Loss decomposition and the embedding penalty.
    let plain = LordModel { config: LordConfig { c_ae: 0.0, c_e: 0.0, ..cfg.clone() }, ..m.clone() };
    assert_eq!(plain.ae_loss(&s, &solver).unwrap(), got);
    let pen = LordModel { config: LordConfig { c_ae: 0.0, c_e: 1.0, ..cfg }, ..m };
    let mean_sq: f64 = traj.states.iter().map(|st| st[..e_dim].iter().map(|x| x * x).sum::<f64>()).sum::<f64>()
        / traj.states.len() as f64;
    assert!((pen.ae_loss(&s, &solver).unwrap() - (got + mean_sq)).abs() < 1e-12);
}

#[test]
fn zero_parameters_have_no_regularizer() {
    let cfg = LordConfig { c_ae: 1.0, c_e: 0.0, ..small_cfg() };
    let mut m = LordModel::build(cfg.clone(), 3, TaskKind::Regression, 2).unwrap();
    let ids: Vec<_> = m.store.ids().collect();
    for id in ids {
        m.store.data_mut(id).iter_mut().for_each(|x| *x = 0.0);
    }
    let s = prepared(9, 4, &cfg, 0.2);
    assert_eq!(m.ae_loss(&s, &euler(1)).unwrap(), m.recon_loss(&s, &euler(1)).unwrap());
}

#[test]
fn dead_main_field_uses_first_observation_only() {
    let cfg = small_cfg();
    let mut m = LordModel::build(cfg.clone(), 3, TaskKind::Classification { classes: 3 }, 4).unwrap();
    let g = m.g.clone();
    zero_net(&mut m, &g);
    let s = prepared(11, 4, &cfg, 0.9);
    let p = predict(&m, &[&s], &euler(2)).unwrap();
    let z0 = m.phi_z.apply(&m.store, &s.x0).unwrap();
    let logits = m.output.apply(&m.store, &z0).unwrap();
    let expected = crate::nn::softmax(&logits);
    for (a, b) in p[0].iter().zip(&expected) {
        assert!((a - b).abs() < 1e-15);
    }
}

#[test]
fn equal_logits_give_uniform_probabilities_and_ln_k() {
    let cfg = LordConfig { c_task: 0.0, ..small_cfg() };
    let mut m = LordModel::build(cfg.clone(), 3, TaskKind::Classification { classes: 4 }, 4).unwrap();
    for id in m.output.params() {
        m.store.data_mut(id).iter_mut().for_each(|x| *x = 0.0);
    }
    let s = prepared(11, 4, &cfg, 0.9);
    let p = predict(&m, &[&s], &euler(1)).unwrap();
    assert!(p[0].iter().all(|&x| (x - 0.25).abs() < 1e-15));
    let mut tape = Tape::new(&m.store);
    let out = m.record_output(&mut tape, &s, &euler(1)).unwrap();
    let ce = record_task_sample(&mut tape, m.task, out, &s).unwrap();
    assert!((tape.scalar(ce) - 4f64.ln()).abs() < 1e-12);
}

#[test]
fn regression_loss_with_exact_prediction_is_zero() {
    let cfg = small_cfg();
    let m = LordModel::build(cfg.clone(), 3, TaskKind::Regression, 4).unwrap();
    let mut s = prepared(11, 4, &cfg, 0.9);
    let y = predict(&m, &[&s], &euler(1)).unwrap()[0][0];
    s.target = Target::Value(y);
    let mut tape = Tape::new(&m.store);
    let out = m.record_output(&mut tape, &s, &euler(1)).unwrap();
    let l = record_task_sample(&mut tape, m.task, out, &s).unwrap();
    assert_eq!(tape.scalar(l), 0.0);
}

/// `z(T)` from a first pass over `e` that records every stage increment
/// `f(e_stage) u`, then a second pass over `z` replaying them.
fn two_pass_z(m: &LordModel, s: &PreparedSample, solver: &SolverConfig) -> Vec<f64> {
    let mut tape = Tape::new(&m.store);
    let x0 = tape.input(s.x0.clone());
    let e0 = m.phi_e.record(&mut tape, x0);
    let incs = crate::ode::stream_inputs(&mut tape, &s.lo);
    let mut stages: Vec<Var> = Vec::new();
    integrate_on_tape(&mut tape, vec![e0], &incs, s.lo.boundaries(), solver, false, |tape, st, u| {
        let de = m.f.record_apply(tape, st[0], u);
        stages.push(de);
        vec![de]
    })
    .unwrap();
    let z0 = m.phi_z.record(&mut tape, x0);
    let mut next = stages.into_iter();
    let traj = integrate_on_tape(&mut tape, vec![z0], &incs, s.lo.boundaries(), solver, false, |tape, st, _| {
        let de = next.next().unwrap();
        vec![m.g.record_apply(tape, st[0], de)]
    })
    .unwrap();
    tape.value(traj.last()[0]).to_vec()
}

#[test]
fn stacked_system_matches_two_pass() {
    let cfg = small_cfg();
    let m = LordModel::build(cfg.clone(), 3, TaskKind::Regression, 9).unwrap();
    let s = prepared(17, 5, &cfg, 1.3);
    for method in [Method::Euler, Method::Midpoint, Method::Rk4] {
        let solver = SolverConfig::new(method, 3);
        let mut tape = Tape::new(&m.store);
        let rec = m.record_autoencoder(&mut tape, &s, &solver, true, false).unwrap();
        let stacked = tape.value(rec.z_final.unwrap()).to_vec();
        let seq = two_pass_z(&m, &s, &solver);
        for (a, b) in stacked.iter().zip(&seq) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

fn toy_split(n: usize, split: Split, cfg: &LordConfig, offset: usize) -> Vec<PreparedSample> {
    let lo = LyndonBasis::new(3, cfg.d1);
    let hi = LyndonBasis::new(3, cfg.d2);
    (0..n)
        .map(|i| {
            let ph = (i + offset) as f64 * 0.37;
            let s = sample(&format!("{i}"), 9, ph, Target::Class((i + offset) % 2), split);
            prepare_sample(&s, 4, &lo, Some(&hi)).unwrap()
        })
        .collect()
}

#[test]
fn lord_mode_freezes_encoder_and_drops_decoder() {
    let cfg = LordConfig { max_iter_ae: 2, max_iter_task: 3, batch_size: 4, ..small_cfg() };
    let train = toy_split(6, Split::Train, &cfg, 0);
    let val = toy_split(3, Split::Val, &cfg, 100);
    let train: Vec<&PreparedSample> = train.iter().collect();
    let val: Vec<&PreparedSample> = val.iter().collect();
    let solver = euler(1);
    let task = TaskKind::Classification { classes: 2 };
    let mut m = LordModel::build(cfg.clone(), 3, task, 1).unwrap();
    let before = m.store.clone();
    let pre = pretrain(&mut m, &train, &solver, 1).unwrap();
    assert_eq!(pre.losses(Phase::Pretrain).len(), 2);
    // Pre-training touches only the autoencoder.
    for id in m.main_group() {
        assert_eq!(m.store.data(id), before.data(id));
    }
    let after_pre = m.store.clone();

    // Main-phase gradients never reach the decoder.
    let (_, grads) = batch_gradients(&m, &train, &solver, &|m: &LordModel, t: &mut Tape<'_>, s: &PreparedSample, sv: &SolverConfig| {
        let out = m.record_output(t, s, sv)?;
        record_task_sample(t, m.task, out, s)
    })
    .unwrap();
    assert!(grads.is_zero(&m.decoder_params()));
    assert!(!grads.is_zero(&m.main_group()));

    // Force a change by requiring every validation to be an improvement.
    let report = train_main(&mut m, &train, &val, &solver, 1).unwrap();
    assert_eq!(report.losses(Phase::Main).len(), 3);
    for id in m.encoder_params().into_iter().chain(m.decoder_params()) {
        let a: Vec<u64> = m.store.data(id).iter().map(|x| x.to_bits()).collect();
        let b: Vec<u64> = after_pre.data(id).iter().map(|x| x.to_bits()).collect();
        assert_eq!(a, b);
    }

    let mut buf = Vec::new();
    write_model_checkpoint(&m, CheckpointContent::Inference, serde_json::Value::Null, &mut buf).unwrap();
    let ck = crate::nn::checkpoint::read_checkpoint(buf.as_slice()).unwrap();
    assert!(ck.blocks.iter().all(|b| !b.name.starts_with("o.") && !b.name.starts_with("phi_s")));
    assert!(ck.block("f.fc1.weight").is_some() && ck.block("g.fc1.weight").is_some());
    let (restored, meta) = AnyModel::from_checkpoint(&ck).unwrap();
    assert_eq!(meta.content, CheckpointContent::Inference);
    let a = predict(&m, &val, &solver).unwrap();
    let b = predict(&restored, &val, &solver).unwrap();
    assert_eq!(a, b);

    let (dec, rest) = m.param_counts();
    assert_eq!(dec, m.store.count(&m.decoder_params()));
    assert_eq!(dec + rest, m.store.blocks().iter().map(|b| b.data.len()).sum::<usize>());
}

#[test]
fn zero_budgets_keep_initial_parameters() {
    let cfg = LordConfig { max_iter_ae: 0, max_iter_task: 0, ..small_cfg() };
    let train = toy_split(4, Split::Train, &cfg, 0);
    let val = toy_split(2, Split::Val, &cfg, 10);
    let train: Vec<&PreparedSample> = train.iter().collect();
    let val: Vec<&PreparedSample> = val.iter().collect();
    let task = TaskKind::Classification { classes: 2 };
    let init = LordModel::build(cfg.clone(), 3, task, 5).unwrap();
    let (m, report) = run_lord(&cfg, task, &train, &val, &euler(1), 5).unwrap();
    assert_eq!(m.store, init.store);
    assert_eq!(report.best_iter, Some(0));
    assert!(report.losses(Phase::Pretrain).is_empty());
}

#[test]
fn training_is_deterministic() {
    let cfg = LordConfig { max_iter_ae: 3, max_iter_task: 3, batch_size: 3, mode: TrainingMode::CoTrain, ..small_cfg() };
    let train = toy_split(5, Split::Train, &cfg, 0);
    let val = toy_split(2, Split::Val, &cfg, 10);
    let train: Vec<&PreparedSample> = train.iter().collect();
    let val: Vec<&PreparedSample> = val.iter().collect();
    let task = TaskKind::Classification { classes: 2 };
    let (a, ra) = run_lord(&cfg, task, &train, &val, &euler(1), 3).unwrap();
    let (b, rb) = run_lord(&cfg, task, &train, &val, &euler(1), 3).unwrap();
    assert_eq!(ra, rb);
    assert_eq!(a.store, b.store);
    assert_eq!(ra.to_csv().lines().next(), Some("iter,phase,loss,val_metric"));
}

#[test]
fn pretrain_rejects_mode_without_it() {
    let cfg = LordConfig { mode: TrainingMode::CoTrainWoPre, ..small_cfg() };
    let train = toy_split(2, Split::Train, &cfg, 0);
    let train: Vec<&PreparedSample> = train.iter().collect();
    let mut m = LordModel::build(cfg, 3, TaskKind::Classification { classes: 2 }, 0).unwrap();
    assert!(matches!(pretrain(&mut m, &train, &euler(1), 0), Err(LordError::Config(_))));
    assert!(matches!(train_main(&mut m, &train, &[], &euler(1), 0), Err(LordError::EmptySplit(_))));
}

#[test]
fn identity_embedding_matches_plain_nrde() {
    let cfg = small_cfg();
    let task = TaskKind::Regression;
    let mut de = DeNrdeModel::build(cfg.clone(), 2, 1.0, 3, task, 3).unwrap();
    de.set_identity_embedding();
    let mut nrde = NrdeModel::build(cfg.clone(), 2, 3, task, 4).unwrap();
    for b in de.store.blocks().to_vec() {
        if let Some(id) = nrde.store.find(&b.name) {
            nrde.store.data_mut(id).copy_from_slice(&b.data);
        }
    }
    let s = sample("x", 13, 0.4, Target::Value(0.0), Split::Test);
    let b2 = LyndonBasis::new(3, 2);
    let p = prepare_sample(&s, 4, &b2, None).unwrap();
    let solver = SolverConfig::new(Method::Rk4, 2);
    let a = predict(&de, &[&p], &solver).unwrap()[0][0];
    let b = predict(&nrde, &[&p], &solver).unwrap()[0][0];
    assert!((a - b).abs() < 1e-12);
}

#[test]
fn compression_width_and_dead_embedding() {
    assert_eq!(compressed_dim(6, 0.5), 3);
    let cfg = small_cfg();
    let mut de = DeNrdeModel::build(cfg, 2, 0.5, 3, TaskKind::Regression, 3).unwrap();
    let s = sample("x", 13, 0.4, Target::Value(0.0), Split::Test);
    let p = prepare_sample(&s, 4, &LyndonBasis::new(3, 2), None).unwrap();
    assert!(de.embedded_stream(&p).unwrap().iter().all(|e| e.len() == 3));
    for id in de.embed.params() {
        de.store.data_mut(id).iter_mut().for_each(|x| *x = 0.0);
    }
    let mut tape = Tape::new(&de.store);
    let solver = SolverConfig::default();
    let x0 = tape.input(p.x0.clone());
    let z0 = de.main.phi_z.record(&mut tape, x0);
    let expected = tape.value(z0).to_vec();
    let incs: Vec<Var> = crate::ode::stream_inputs(&mut tape, &p.lo).into_iter().map(|l| de.embed.record(&mut tape, l)).collect();
    let traj = integrate_on_tape(&mut tape, vec![z0], &incs, p.lo.boundaries(), &solver, false, |t, st, u| {
        vec![de.main.g.record_apply(t, st[0], u)]
    })
    .unwrap();
    assert_eq!(tape.value(traj.last()[0]), expected.as_slice());
}
