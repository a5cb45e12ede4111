//! Fixed-step integration of rough differential equations driven by a
//! piecewise-constant log-signature control, recorded on a [`Tape`] so the
//! discretized solution can be differentiated exactly.
//!
//! Within window `i` the control derivative is `L_i / (r_{i+1} - r_i)`; with
//! `n` steps of width `h = (r_{i+1} - r_i) / n` every step sees the same
//! increment `h * L_i / (r_{i+1} - r_i) = L_i / n`. Right-hand sides are linear
//! in the control, so each solver stage is evaluated against `L_i / n`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::{Gradients, NnError, ParamStore, Tape, Var, VectorFieldNet};
use crate::path::LogSignatureStream;

#[derive(Debug, Error)]
pub enum OdeError {
    #[error("non-finite state at t = {time}")]
    Divergence { time: f64 },
    #[error("{what}: expected {expected}, got {actual}")]
    Dimension { what: &'static str, expected: usize, actual: usize },
    #[error("steps_per_window must be at least 1")]
    NoSteps,
    #[error(transparent)]
    Nn(#[from] NnError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Euler,
    Midpoint,
    Rk4,
}

impl Method {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "euler" => Some(Method::Euler),
            "midpoint" => Some(Method::Midpoint),
            "rk4" => Some(Method::Rk4),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Euler => "euler",
            Method::Midpoint => "midpoint",
            Method::Rk4 => "rk4",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub method: Method,
    pub steps_per_window: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { method: Method::Rk4, steps_per_window: 4 }
    }
}

impl SolverConfig {
    pub fn new(method: Method, steps_per_window: usize) -> Self {
        Self { method, steps_per_window }
    }
}

/// States at window boundaries, optionally at every solver step too.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub steps: Option<Vec<(f64, Vec<f64>)>>,
}

impl Trajectory {
    pub fn last(&self) -> &[f64] {
        self.states.last().expect("non-empty trajectory")
    }
}

/// A trajectory whose states are still tape nodes, one `Vec<Var>` of state
/// parts per recorded time.
#[derive(Debug, Clone)]
pub struct TapedTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<Var>>,
    pub steps: Option<Vec<(f64, Vec<Var>)>>,
}

impl TapedTrajectory {
    pub fn last(&self) -> &[Var] {
        self.states.last().expect("non-empty trajectory")
    }

    /// Concatenated numeric state at each recorded time.
    pub fn to_values(&self, tape: &Tape<'_>) -> Trajectory {
        let flat = |parts: &[Var]| parts.iter().flat_map(|&p| tape.value(p).to_vec()).collect();
        Trajectory {
            times: self.times.clone(),
            states: self.states.iter().map(|s| flat(s)).collect(),
            steps: self
                .steps
                .as_ref()
                .map(|steps| steps.iter().map(|(t, s)| (*t, flat(s))).collect()),
        }
    }
}

fn combine<'p>(tape: &mut Tape<'p>, base: &[Var], terms: &[(&[Var], f64)]) -> Vec<Var> {
    (0..base.len())
        .map(|p| {
            let mut lc = vec![(base[p], 1.0)];
            lc.extend(terms.iter().map(|(k, c)| (k[p], *c)));
            tape.lin_comb(&lc)
        })
        .collect()
}

/// Integrates a multi-part state across every window.
///
/// `increments[i]` is the window's total control increment (a log-signature
/// or an embedding of one); `boundaries` are the window edges. `rhs` receives
/// the current state parts and a per-step control increment and returns the
/// per-step state increments.
pub fn integrate_on_tape<'p, F>(
    tape: &mut Tape<'p>,
    init: Vec<Var>,
    increments: &[Var],
    boundaries: &[f64],
    cfg: &SolverConfig,
    keep_steps: bool,
    mut rhs: F,
) -> Result<TapedTrajectory, OdeError>
where
    F: FnMut(&mut Tape<'p>, &[Var], Var) -> Vec<Var>,
{
    if cfg.steps_per_window == 0 {
        return Err(OdeError::NoSteps);
    }
    if boundaries.len() != increments.len() + 1 {
        return Err(OdeError::Dimension {
            what: "window boundaries",
            expected: increments.len() + 1,
            actual: boundaries.len(),
        });
    }
    let n = cfg.steps_per_window;
    let mut state = init;
    let mut times = vec![boundaries[0]];
    let mut states = vec![state.clone()];
    let mut steps = keep_steps.then(|| vec![(boundaries[0], state.clone())]);

    for (i, &inc) in increments.iter().enumerate() {
        let u = tape.scale(inc, 1.0 / n as f64);
        let h = (boundaries[i + 1] - boundaries[i]) / n as f64;
        for k in 0..n {
            state = match cfg.method {
                Method::Euler => {
                    let k1 = rhs(tape, &state, u);
                    combine(tape, &state, &[(&k1, 1.0)])
                }
                Method::Midpoint => {
                    let k1 = rhs(tape, &state, u);
                    let mid = combine(tape, &state, &[(&k1, 0.5)]);
                    let k2 = rhs(tape, &mid, u);
                    combine(tape, &state, &[(&k2, 1.0)])
                }
                Method::Rk4 => {
                    let k1 = rhs(tape, &state, u);
                    let s2 = combine(tape, &state, &[(&k1, 0.5)]);
                    let k2 = rhs(tape, &s2, u);
                    let s3 = combine(tape, &state, &[(&k2, 0.5)]);
                    let k3 = rhs(tape, &s3, u);
                    let s4 = combine(tape, &state, &[(&k3, 1.0)]);
                    let k4 = rhs(tape, &s4, u);
                    let sixth = 1.0 / 6.0;
                    combine(
                        tape,
                        &state,
                        &[(&k1, sixth), (&k2, 2.0 * sixth), (&k3, 2.0 * sixth), (&k4, sixth)],
                    )
                }
            };
            if let Some(steps) = steps.as_mut() {
                steps.push((boundaries[i] + (k + 1) as f64 * h, state.clone()));
            }
        }
        if tape.has_non_finite() {
            return Err(OdeError::Divergence { time: boundaries[i + 1] });
        }
        times.push(boundaries[i + 1]);
        states.push(state.clone());
    }
    Ok(TapedTrajectory { times, states, steps })
}

/// Records each window's log-signature as a constant tape input.
pub fn stream_inputs(tape: &mut Tape<'_>, stream: &LogSignatureStream) -> Vec<Var> {
    (0..stream.len()).map(|i| tape.input(stream.entry(i).to_vec())).collect()
}

fn check_rde(field: &VectorFieldNet, state_dim: usize, control_dim: usize) -> Result<(), OdeError> {
    let s = field.shape;
    if s.in_dim != state_dim || s.out_rows != state_dim {
        return Err(OdeError::Dimension { what: "vector field state size", expected: state_dim, actual: s.in_dim });
    }
    if s.out_cols != control_dim {
        return Err(OdeError::Dimension { what: "vector field control size", expected: control_dim, actual: s.out_cols });
    }
    Ok(())
}

/// Records `dz = field(z) dL` on `tape`.
pub fn integrate_rde_on_tape<'p>(
    tape: &mut Tape<'p>,
    field: &VectorFieldNet,
    z0: Var,
    stream: &LogSignatureStream,
    cfg: &SolverConfig,
    keep_steps: bool,
) -> Result<TapedTrajectory, OdeError> {
    check_rde(field, tape.value(z0).len(), stream.width())?;
    let incs = stream_inputs(tape, stream);
    integrate_on_tape(tape, vec![z0], &incs, stream.boundaries(), cfg, keep_steps, |tape, s, u| {
        vec![field.record_apply(tape, s[0], u)]
    })
}

/// Integrates `dz/dt = field(z) g(X, t)` from `z0`.
pub fn integrate_rde(
    field: &VectorFieldNet,
    store: &ParamStore,
    z0: &[f64],
    stream: &LogSignatureStream,
    cfg: &SolverConfig,
) -> Result<Trajectory, OdeError> {
    let mut tape = Tape::new(store);
    let z = tape.input(z0.to_vec());
    let traj = integrate_rde_on_tape(&mut tape, field, z, stream, cfg, false)?;
    Ok(traj.to_values(&tape))
}

/// Vector fields of the coupled system: `f` drives the embedding `e` from the
/// log-signature control, `g` and `o` are driven by `de`.
#[derive(Debug, Clone, Copy)]
pub struct AugmentedFields<'a> {
    pub g: Option<&'a VectorFieldNet>,
    pub f: &'a VectorFieldNet,
    pub o: Option<&'a VectorFieldNet>,
}

/// Which parts of the `(z, e, s)` state are present.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AugmentedLayout {
    pub z: Option<usize>,
    pub e: usize,
    pub s: Option<usize>,
}

impl AugmentedLayout {
    fn of(fields: &AugmentedFields<'_>) -> Self {
        AugmentedLayout { z: fields.g.map(|_| 0), e: usize::from(fields.g.is_some()), s: fields.o.map(|_| usize::from(fields.g.is_some()) + 1) }
    }
}

/// Records the stacked system
/// `de = f(e) dL`, `dz = g(z) de`, `ds = o(s) de`; absent `g`/`o` drop their
/// part. Initial values are given in `(z, e, s)` order (only the present parts).
pub fn integrate_augmented_on_tape<'p>(
    tape: &mut Tape<'p>,
    fields: AugmentedFields<'_>,
    init: Vec<Var>,
    increments: &[Var],
    boundaries: &[f64],
    cfg: &SolverConfig,
    keep_steps: bool,
) -> Result<(TapedTrajectory, AugmentedLayout), OdeError> {
    let layout = AugmentedLayout::of(&fields);
    let expected_parts = 1 + usize::from(fields.g.is_some()) + usize::from(fields.o.is_some());
    if init.len() != expected_parts {
        return Err(OdeError::Dimension { what: "initial state parts", expected: expected_parts, actual: init.len() });
    }
    let e_dim = tape.value(init[layout.e]).len();
    let ctrl_dim = increments.first().map_or(0, |&v| tape.value(v).len());
    check_rde(fields.f, e_dim, ctrl_dim)?;
    for (net, idx) in [(fields.g, layout.z), (fields.o, layout.s)] {
        if let (Some(net), Some(idx)) = (net, idx) {
            let dim = tape.value(init[idx]).len();
            check_rde(net, dim, e_dim)?;
        }
    }
    let traj = integrate_on_tape(tape, init, increments, boundaries, cfg, keep_steps, |tape, s, u| {
        let de = fields.f.record_apply(tape, s[layout.e], u);
        let mut out = Vec::with_capacity(s.len());
        if let (Some(g), Some(zi)) = (fields.g, layout.z) {
            out.push(g.record_apply(tape, s[zi], de));
        }
        out.push(de);
        if let (Some(o), Some(si)) = (fields.o, layout.s) {
            out.push(o.record_apply(tape, s[si], de));
        }
        out
    })?;
    Ok((traj, layout))
}

/// Plain evaluation of the stacked `(z, e, s)` system. States in the returned
/// trajectory are the concatenation `z ++ e ++ s`.
pub fn integrate_augmented(
    fields: AugmentedFields<'_>,
    store: &ParamStore,
    stream: &LogSignatureStream,
    init: &[Vec<f64>],
    cfg: &SolverConfig,
) -> Result<Trajectory, OdeError> {
    let mut tape = Tape::new(store);
    let init: Vec<Var> = init.iter().map(|v| tape.input(v.clone())).collect();
    let incs = stream_inputs(&mut tape, stream);
    let (traj, _) = integrate_augmented_on_tape(&mut tape, fields, init, &incs, stream.boundaries(), cfg, false)?;
    Ok(traj.to_values(&tape))
}

/// Gradients of a scalar loss of the final state.
pub struct RdeGradients {
    pub trajectory: Trajectory,
    pub loss: f64,
    pub params: Gradients,
    pub z0: Vec<f64>,
}

/// Integrates `dz = field(z) dL` and differentiates `loss(z(T))` with respect
/// to the field parameters and the initial state.
pub fn integrate_with_grad<L>(
    field: &VectorFieldNet,
    store: &ParamStore,
    z0: &[f64],
    stream: &LogSignatureStream,
    cfg: &SolverConfig,
    loss: L,
) -> Result<RdeGradients, OdeError>
where
    L: for<'t, 'q> FnOnce(&'t mut Tape<'q>, Var) -> Var,
{
    let mut tape = Tape::new(store);
    let z = tape.input(z0.to_vec());
    let traj = integrate_rde_on_tape(&mut tape, field, z, stream, cfg, false)?;
    let zt = traj.last()[0];
    let l = loss(&mut tape, zt);
    let grads = tape.backward(l)?;
    Ok(RdeGradients {
        trajectory: traj.to_values(&tape),
        loss: tape.scalar(l),
        z0: grads.wrt(z, z0.len()),
        params: grads.params,
    })
}
