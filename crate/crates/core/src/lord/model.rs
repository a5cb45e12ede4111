use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::nn::{AffineMap, ParamId, ParamStore, Tape, Var, VectorFieldNet};
use crate::ode::{
    integrate_augmented_on_tape, integrate_on_tape, stream_inputs, AugmentedFields, SolverConfig,
    TapedTrajectory,
};
use crate::path::{LogSignatureStream, TaskKind};
use crate::tensoralg::logsig_dim;

use super::{LordConfig, LordError, PreparedSample};

/// Which architecture a model bundle holds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ModelKind {
    Lord,
    /// Plain NRDE at the given depth.
    Nrde { depth: usize },
    /// Feed-forward compression of the depth-`depth` log-signature before the main NRDE.
    DeNrde { depth: usize, ratio: f64 },
}

/// Common surface of every model trained on a task loss.
pub trait Predictor: Sync {
    fn store(&self) -> &ParamStore;
    fn store_mut(&mut self) -> &mut ParamStore;
    fn task(&self) -> TaskKind;
    fn kind(&self) -> ModelKind;
    fn config(&self) -> &LordConfig;
    /// Augmented input dimension the model was built for.
    fn channels(&self) -> usize;
    /// Records the output-layer result (logits, or a single regression value).
    fn record_output(&self, tape: &mut Tape<'_>, sample: &PreparedSample, solver: &SolverConfig) -> Result<Var, LordError>;
    /// Parameters regularized by `c_task` and updated by the main phase.
    fn main_params(&self) -> Vec<ParamId>;
    /// Parameters an inference checkpoint must carry.
    fn inference_params(&self) -> Vec<ParamId>;
}

/// Encoder `f`, decoder `o`, main field `g`, initial-value maps and output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LordModel {
    pub config: LordConfig,
    pub channels: usize,
    pub task: TaskKind,
    pub store: ParamStore,
    pub f: VectorFieldNet,
    pub o: VectorFieldNet,
    pub g: VectorFieldNet,
    pub phi_z: AffineMap,
    pub phi_e: AffineMap,
    pub phi_s: AffineMap,
    pub output: AffineMap,
}

/// Boundary values recorded by the autoencoder integration.
pub struct AutoencoderRecord {
    pub trajectory: TapedTrajectory,
    /// `e(r_i)` for every boundary.
    pub e: Vec<Var>,
    /// `s(r_i)` for every boundary.
    pub s: Vec<Var>,
    /// `z(T)` when the main NRDE was integrated alongside.
    pub z_final: Option<Var>,
}

impl LordModel {
    /// Initializes every network for data of augmented dimension `channels`.
    pub fn build(config: LordConfig, channels: usize, task: TaskKind, seed: u64) -> Result<Self, LordError> {
        config.validate()?;
        if channels == 0 {
            return Err(LordError::Config("channel count must be positive".into()));
        }
        let lo = logsig_dim(channels, config.d1);
        let hi = logsig_dim(channels, config.d2);
        let embed = config.embed_dim_for(channels);
        let hidden = config.hidden_dim;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let f = VectorFieldNet::init(&mut store, "f", config.f.shape(embed, embed, lo), &mut rng)?;
        let o = VectorFieldNet::init(&mut store, "o", config.o.shape(hi, hi, embed), &mut rng)?;
        let g = VectorFieldNet::init(&mut store, "g", config.g.shape(hidden, hidden, embed), &mut rng)?;
        let phi_e = AffineMap::init(&mut store, "phi_e", channels, embed, &mut rng);
        let phi_s = AffineMap::init(&mut store, "phi_s", embed, hi, &mut rng);
        let phi_z = AffineMap::init(&mut store, "phi_z", channels, hidden, &mut rng);
        let output = AffineMap::init(&mut store, "output", hidden, task.output_dim(), &mut rng);
        Ok(Self { config, channels, task, store, f, o, g, phi_z, phi_e, phi_s, output })
    }

    pub fn embed_dim(&self) -> usize {
        self.f.shape.out_rows
    }

    pub fn lo_dim(&self) -> usize {
        self.f.shape.out_cols
    }

    pub fn hi_dim(&self) -> usize {
        self.o.shape.out_rows
    }

    /// `theta_f` and `theta_phi_e`.
    pub fn encoder_params(&self) -> Vec<ParamId> {
        let mut p = self.f.params();
        p.extend(self.phi_e.params());
        p
    }

    /// `theta_o` and `theta_phi_s`.
    pub fn decoder_params(&self) -> Vec<ParamId> {
        let mut p = self.o.params();
        p.extend(self.phi_s.params());
        p
    }

    /// `theta_g`, `theta_phi_z` and `theta_phi_output`.
    pub fn main_group(&self) -> Vec<ParamId> {
        let mut p = self.g.params();
        p.extend(self.phi_z.params());
        p.extend(self.output.params());
        p
    }

    fn check_sample(&self, sample: &PreparedSample) -> Result<(), LordError> {
        if sample.x0.len() != self.channels {
            return Err(LordError::Dimension { what: "X(0)", expected: self.channels, actual: sample.x0.len() });
        }
        if sample.lo.width() != self.lo_dim() {
            return Err(LordError::Dimension { what: "low-depth stream", expected: self.lo_dim(), actual: sample.lo.width() });
        }
        Ok(())
    }

    /// Integrates `(z?, e, s?)` jointly over the low-depth stream.
    pub fn record_autoencoder(
        &self,
        tape: &mut Tape<'_>,
        sample: &PreparedSample,
        solver: &SolverConfig,
        with_main: bool,
        with_decoder: bool,
    ) -> Result<AutoencoderRecord, LordError> {
        self.check_sample(sample)?;
        let x0 = tape.input(sample.x0.clone());
        let e0 = self.phi_e.record(tape, x0);
        let mut init = Vec::with_capacity(3);
        if with_main {
            init.push(self.phi_z.record(tape, x0));
        }
        init.push(e0);
        if with_decoder {
            init.push(self.phi_s.record(tape, e0));
        }
        let incs = stream_inputs(tape, &sample.lo);
        let fields = AugmentedFields {
            g: with_main.then_some(&self.g),
            f: &self.f,
            o: with_decoder.then_some(&self.o),
        };
        let (trajectory, layout) =
            integrate_augmented_on_tape(tape, fields, init, &incs, sample.lo.boundaries(), solver, false)?;
        let e = trajectory.states.iter().map(|s| s[layout.e]).collect();
        let s = layout.s.map_or_else(Vec::new, |i| trajectory.states.iter().map(|st| st[i]).collect());
        let z_final = layout.z.map(|i| trajectory.last()[i]);
        Ok(AutoencoderRecord { trajectory, e, s, z_final })
    }

    /// `sum_{i=0}^{M} ||(s(r_{i+1}) - s(r_i)) - LogSig^{D2}_i||^2 / M` with
    /// `M = W - 1` (taken as 1 for a single window).
    pub fn record_recon(&self, tape: &mut Tape<'_>, record: &AutoencoderRecord, target: &LogSignatureStream) -> Result<Var, LordError> {
        if target.width() != self.hi_dim() {
            return Err(LordError::Dimension { what: "high-depth stream", expected: self.hi_dim(), actual: target.width() });
        }
        if record.s.len() != target.len() + 1 {
            return Err(LordError::Dimension { what: "reconstruction windows", expected: target.len() + 1, actual: record.s.len() });
        }
        let terms: Vec<Var> = (0..target.len())
            .map(|i| {
                let ds = tape.sub(record.s[i + 1], record.s[i]);
                let t = tape.input(target.entry(i).to_vec());
                let diff = tape.sub(ds, t);
                tape.sq_norm(diff)
            })
            .collect();
        let m = recon_divisor(target.len());
        let weighted: Vec<(Var, f64)> = terms.iter().map(|&v| (v, 1.0 / m)).collect();
        Ok(tape.lin_comb(&weighted))
    }

    /// Mean of `||e(r_i)||^2` over window boundaries.
    pub fn record_embedding_penalty(&self, tape: &mut Tape<'_>, record: &AutoencoderRecord) -> Var {
        let norms: Vec<Var> = record.e.iter().map(|&e| tape.sq_norm(e)).collect();
        tape.mean(&norms)
    }

    /// Per-sample part of `L_AE`: `L_recon + c_e * mean ||e||^2`.
    pub fn record_ae_sample(&self, tape: &mut Tape<'_>, sample: &PreparedSample, solver: &SolverConfig) -> Result<Var, LordError> {
        let rec = self.record_autoencoder(tape, sample, solver, false, true)?;
        self.ae_terms(tape, &rec, sample)
    }

    fn ae_terms(&self, tape: &mut Tape<'_>, rec: &AutoencoderRecord, sample: &PreparedSample) -> Result<Var, LordError> {
        let recon = self.record_recon(tape, rec, sample.hi()?)?;
        if self.config.c_e == 0.0 {
            return Ok(recon);
        }
        let pen = self.record_embedding_penalty(tape, rec);
        Ok(tape.lin_comb(&[(recon, 1.0), (pen, self.config.c_e)]))
    }

    /// Per-sample co-training objective `task + w * (L_recon + c_e * mean ||e||^2)`
    /// from a single joint `(z, e, s)` integration.
    pub fn record_cotrain_sample(&self, tape: &mut Tape<'_>, sample: &PreparedSample, solver: &SolverConfig) -> Result<Var, LordError> {
        let rec = self.record_autoencoder(tape, sample, solver, true, true)?;
        let z = rec.z_final.expect("main state integrated");
        let out = self.output.record(tape, z);
        let task = record_task_sample(tape, self.task, out, sample)?;
        let ae = self.ae_terms(tape, &rec, sample)?;
        Ok(tape.lin_comb(&[(task, 1.0), (ae, self.config.co_train_ae_weight)]))
    }

    /// Plain `L_recon` of one sample.
    pub fn recon_loss(&self, sample: &PreparedSample, solver: &SolverConfig) -> Result<f64, LordError> {
        let mut tape = Tape::new(&self.store);
        let rec = self.record_autoencoder(&mut tape, sample, solver, false, true)?;
        let v = self.record_recon(&mut tape, &rec, sample.hi()?)?;
        Ok(tape.scalar(v))
    }

    /// `L_AE` of one sample, regularizer included.
    pub fn ae_loss(&self, sample: &PreparedSample, solver: &SolverConfig) -> Result<f64, LordError> {
        let mut tape = Tape::new(&self.store);
        let v = self.record_ae_sample(&mut tape, sample, solver)?;
        let mut ids = self.encoder_params();
        ids.extend(self.decoder_params());
        Ok(tape.scalar(v) + self.config.c_ae * crate::nn::l2_penalty(&self.store, &ids))
    }

    /// Embedding increments `e(r_{i+1}) - e(r_i)` for every window.
    pub fn embedding_increments(&self, sample: &PreparedSample, solver: &SolverConfig) -> Result<Vec<Vec<f64>>, LordError> {
        let mut tape = Tape::new(&self.store);
        let rec = self.record_autoencoder(&mut tape, sample, solver, false, false)?;
        Ok(rec
            .e
            .windows(2)
            .map(|w| tape.value(w[1]).iter().zip(tape.value(w[0])).map(|(a, b)| a - b).collect())
            .collect())
    }

    /// Parameter counts `(decoder, rest)`.
    pub fn param_counts(&self) -> (usize, usize) {
        let dec = self.store.count(&self.decoder_params());
        (dec, self.store.count(&self.store.ids().collect::<Vec<_>>()) - dec)
    }
}

/// Divisor `M` of the reconstruction loss for `windows` windows.
pub fn recon_divisor(windows: usize) -> f64 {
    windows.saturating_sub(1).max(1) as f64
}

/// Per-sample task term: cross-entropy against the class, or squared error.
pub fn record_task_sample(tape: &mut Tape<'_>, task: TaskKind, out: Var, sample: &PreparedSample) -> Result<Var, LordError> {
    match task {
        TaskKind::Classification { classes } => {
            let c = sample.target.class().ok_or(LordError::TargetKind)?;
            if c >= classes {
                return Err(LordError::Dimension { what: "class index", expected: classes, actual: c });
            }
            Ok(tape.softmax_ce(out, c))
        }
        TaskKind::Regression => {
            let y = tape.input(vec![sample.target.value()]);
            let diff = tape.sub(out, y);
            Ok(tape.sq_norm(diff))
        }
    }
}

impl Predictor for LordModel {
    fn kind(&self) -> ModelKind {
        ModelKind::Lord
    }

    fn config(&self) -> &LordConfig {
        &self.config
    }

    fn channels(&self) -> usize {
        self.channels
    }

    fn store(&self) -> &ParamStore {
        &self.store
    }

    fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn task(&self) -> TaskKind {
        self.task
    }

    /// Integrates `(z, e)` jointly; the decoder is not evaluated.
    fn record_output(&self, tape: &mut Tape<'_>, sample: &PreparedSample, solver: &SolverConfig) -> Result<Var, LordError> {
        let rec = self.record_autoencoder(tape, sample, solver, true, false)?;
        let z = rec.z_final.expect("main state integrated");
        Ok(self.output.record(tape, z))
    }

    fn main_params(&self) -> Vec<ParamId> {
        self.main_group()
    }

    fn inference_params(&self) -> Vec<ParamId> {
        let mut p = self.encoder_params();
        p.extend(self.main_group());
        p
    }
}

/// Shared main-NRDE parts of the baselines.
#[derive(Debug, Clone, PartialEq)]
pub struct MainNrde {
    pub g: VectorFieldNet,
    pub phi_z: AffineMap,
    pub output: AffineMap,
}

impl MainNrde {
    fn init(store: &mut ParamStore, cfg: &LordConfig, channels: usize, control: usize, task: TaskKind, rng: &mut ChaCha8Rng) -> Result<Self, LordError> {
        let hidden = cfg.hidden_dim;
        let g = VectorFieldNet::init(store, "g", cfg.g.shape(hidden, hidden, control), rng)?;
        let phi_z = AffineMap::init(store, "phi_z", channels, hidden, rng);
        let output = AffineMap::init(store, "output", hidden, task.output_dim(), rng);
        Ok(Self { g, phi_z, output })
    }

    fn params(&self) -> Vec<ParamId> {
        let mut p = self.g.params();
        p.extend(self.phi_z.params());
        p.extend(self.output.params());
        p
    }

    /// Integrates `dz = g(z) dI` over per-window increments `I_i` and applies the output layer.
    fn record(&self, tape: &mut Tape<'_>, x0: &[f64], incs: &[Var], boundaries: &[f64], solver: &SolverConfig) -> Result<(Var, Var), LordError> {
        let x0 = tape.input(x0.to_vec());
        let z0 = self.phi_z.record(tape, x0);
        let traj = integrate_on_tape(tape, vec![z0], incs, boundaries, solver, false, |tape, s, u| {
            vec![self.g.record_apply(tape, s[0], u)]
        })?;
        let zt = traj.last()[0];
        Ok((z0, self.output.record(tape, zt)))
    }
}

/// The original NRDE driven directly by depth-`depth` log-signatures.
#[derive(Debug, Clone, PartialEq)]
pub struct NrdeModel {
    pub config: LordConfig,
    pub depth: usize,
    pub channels: usize,
    pub task: TaskKind,
    pub store: ParamStore,
    pub main: MainNrde,
}

impl NrdeModel {
    pub fn build(config: LordConfig, depth: usize, channels: usize, task: TaskKind, seed: u64) -> Result<Self, LordError> {
        if !(1..=4).contains(&depth) {
            return Err(LordError::Config(format!("NRDE depth must be in 1..=4, got {depth}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let main = MainNrde::init(&mut store, &config, channels, logsig_dim(channels, depth), task, &mut rng)?;
        Ok(Self { config, depth, channels, task, store, main })
    }
}

impl Predictor for NrdeModel {
    fn kind(&self) -> ModelKind {
        ModelKind::Nrde { depth: self.depth }
    }

    fn config(&self) -> &LordConfig {
        &self.config
    }

    fn channels(&self) -> usize {
        self.channels
    }

    fn store(&self) -> &ParamStore {
        &self.store
    }

    fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn task(&self) -> TaskKind {
        self.task
    }

    fn record_output(&self, tape: &mut Tape<'_>, sample: &PreparedSample, solver: &SolverConfig) -> Result<Var, LordError> {
        let width = logsig_dim(self.channels, self.depth);
        if sample.lo.width() != width {
            return Err(LordError::Dimension { what: "NRDE stream", expected: width, actual: sample.lo.width() });
        }
        let incs = stream_inputs(tape, &sample.lo);
        Ok(self.main.record(tape, &sample.x0, &incs, sample.lo.boundaries(), solver)?.1)
    }

    fn main_params(&self) -> Vec<ParamId> {
        self.main.params()
    }

    fn inference_params(&self) -> Vec<ParamId> {
        self.main.params()
    }
}

/// Width of the compressed log-signature: `ceil(ratio * logsig_dim)`.
pub fn compressed_dim(full: usize, ratio: f64) -> usize {
    ((ratio * full as f64).ceil() as usize).max(1)
}

/// Directly compresses each depth-`depth` log-signature with a fully-connected
/// map before the main NRDE reads it.
#[derive(Debug, Clone, PartialEq)]
pub struct DeNrdeModel {
    pub config: LordConfig,
    pub depth: usize,
    pub ratio: f64,
    pub channels: usize,
    pub task: TaskKind,
    pub store: ParamStore,
    pub embed: AffineMap,
    pub main: MainNrde,
}

impl DeNrdeModel {
    pub fn build(config: LordConfig, depth: usize, ratio: f64, channels: usize, task: TaskKind, seed: u64) -> Result<Self, LordError> {
        if !(ratio > 0.0 && ratio <= 1.0) {
            return Err(LordError::Config(format!("compression ratio must be in (0, 1], got {ratio}")));
        }
        let full = logsig_dim(channels, depth);
        let embedded = compressed_dim(full, ratio);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let embed = AffineMap::init(&mut store, "embed", full, embedded, &mut rng);
        let main = MainNrde::init(&mut store, &config, channels, embedded, task, &mut rng)?;
        Ok(Self { config, depth, ratio, channels, task, store, embed, main })
    }

    /// Sets the embedding to the identity (requires `ratio = 1`).
    pub fn set_identity_embedding(&mut self) {
        assert_eq!(self.embed.in_dim, self.embed.out_dim);
        let n = self.embed.in_dim;
        let w = self.store.data_mut(self.embed.weight);
        w.iter_mut().enumerate().for_each(|(k, x)| *x = if k / n == k % n { 1.0 } else { 0.0 });
        self.store.data_mut(self.embed.bias).iter_mut().for_each(|x| *x = 0.0);
    }

    /// Embedded log-signatures of every window.
    pub fn embedded_stream(&self, sample: &PreparedSample) -> Result<Vec<Vec<f64>>, LordError> {
        (0..sample.lo.len()).map(|i| Ok(self.embed.apply(&self.store, sample.lo.entry(i))?)).collect()
    }

    /// `(z(0), output)` of the forward pass.
    pub fn record_forward(&self, tape: &mut Tape<'_>, sample: &PreparedSample, solver: &SolverConfig) -> Result<(Var, Var), LordError> {
        if sample.lo.width() != self.embed.in_dim {
            return Err(LordError::Dimension { what: "DE-NRDE stream", expected: self.embed.in_dim, actual: sample.lo.width() });
        }
        let raw = stream_inputs(tape, &sample.lo);
        let incs: Vec<Var> = raw.into_iter().map(|l| self.embed.record(tape, l)).collect();
        self.main.record(tape, &sample.x0, &incs, sample.lo.boundaries(), solver)
    }
}

impl Predictor for DeNrdeModel {
    fn kind(&self) -> ModelKind {
        ModelKind::DeNrde { depth: self.depth, ratio: self.ratio }
    }

    fn config(&self) -> &LordConfig {
        &self.config
    }

    fn channels(&self) -> usize {
        self.channels
    }

    fn store(&self) -> &ParamStore {
        &self.store
    }

    fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn task(&self) -> TaskKind {
        self.task
    }

    fn record_output(&self, tape: &mut Tape<'_>, sample: &PreparedSample, solver: &SolverConfig) -> Result<Var, LordError> {
        Ok(self.record_forward(tape, sample, solver)?.1)
    }

    /// The embedding is trained end-to-end with the main NRDE.
    fn main_params(&self) -> Vec<ParamId> {
        let mut p = self.embed.params().to_vec();
        p.extend(self.main.params());
        p
    }

    fn inference_params(&self) -> Vec<ParamId> {
        self.main_params()
    }
}
