use super::{Gradients, NnError, ParamId, ParamStore};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Input,
    /// `W x + b` with `W` stored `out x in`.
    Affine { x: Var, w: ParamId, b: ParamId },
    Relu(Var),
    Tanh(Var),
    /// Row-major `rows x cols` matrix times a vector.
    MatVec { m: Var, rows: usize, cols: usize, v: Var },
    Add(Var, Var),
    Sub(Var, Var),
    Scale(Var, f64),
    /// `sum_i c_i x_i` over equal-length operands.
    LinComb(Vec<(Var, f64)>),
    SqNorm(Var),
    /// `-ln(max(softmax(logits)[target], 1e-12))`.
    SoftmaxCe { logits: Var, target: usize },
    ParamSqNorm(Vec<ParamId>),
    Slice { x: Var, start: usize, len: usize },
    Concat(Vec<Var>),
}

#[derive(Debug, Clone)]
struct Node {
    value: Vec<f64>,
    op: Op,
}

/// Lower bound applied to the true-class probability in cross-entropy.
pub const CE_CLAMP: f64 = 1e-12;

/// Records a computation over a closed set of primitives and differentiates a
/// scalar result by reverse accumulation.
pub struct Tape<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    first_non_finite: Option<usize>,
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Self { params, nodes: Vec::new(), first_non_finite: None }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    /// True once any recorded value was NaN or infinite.
    pub fn has_non_finite(&self) -> bool {
        self.first_non_finite.is_some()
    }

    fn eval(&self, op: &Op, values: &[Node]) -> Vec<f64> {
        let val = |v: &Var| values[v.0].value.as_slice();
        match op {
            Op::Input => unreachable!("inputs carry their own value"),
            Op::Affine { x, w, b } => {
                let x = val(x);
                let wb = self.params.block(*w);
                let bias = self.params.data(*b);
                let mut out = bias.to_vec();
                for (r, o) in out.iter_mut().enumerate() {
                    let row = &wb.data[r * wb.cols..(r + 1) * wb.cols];
                    *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
                }
                out
            }
            Op::Relu(x) => val(x).iter().map(|&a| a.max(0.0)).collect(),
            Op::Tanh(x) => val(x).iter().map(|a| a.tanh()).collect(),
            Op::MatVec { m, rows, cols, v } => {
                let m = val(m);
                let v = val(v);
                (0..*rows)
                    .map(|r| m[r * cols..(r + 1) * cols].iter().zip(v).map(|(a, b)| a * b).sum())
                    .collect()
            }
            Op::Add(a, b) => val(a).iter().zip(val(b)).map(|(x, y)| x + y).collect(),
            Op::Sub(a, b) => val(a).iter().zip(val(b)).map(|(x, y)| x - y).collect(),
            Op::Scale(a, c) => val(a).iter().map(|x| x * c).collect(),
            Op::LinComb(terms) => {
                let mut out = vec![0.0; val(&terms[0].0).len()];
                for (v, c) in terms {
                    out.iter_mut().zip(val(v)).for_each(|(o, x)| *o += c * x);
                }
                out
            }
            Op::SqNorm(a) => vec![val(a).iter().map(|x| x * x).sum()],
            Op::SoftmaxCe { logits, target } => {
                let p = softmax(val(logits));
                vec![-(p[*target].max(CE_CLAMP)).ln()]
            }
            Op::ParamSqNorm(ids) => vec![super::l2_penalty(self.params, ids)],
            Op::Slice { x, start, len } => val(x)[*start..start + len].to_vec(),
            Op::Concat(parts) => parts.iter().flat_map(|p| val(p).iter().copied()).collect(),
        }
    }

    fn push(&mut self, op: Op) -> Var {
        let value = self.eval(&op, &self.nodes);
        self.push_value(value, op)
    }

    fn push_value(&mut self, value: Vec<f64>, op: Op) -> Var {
        if self.first_non_finite.is_none() && value.iter().any(|x| !x.is_finite()) {
            self.first_non_finite = Some(self.nodes.len());
        }
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// A constant leaf; its adjoint is still available after `backward`.
    pub fn input(&mut self, value: Vec<f64>) -> Var {
        self.push_value(value, Op::Input)
    }

    pub fn affine(&mut self, x: Var, w: ParamId, b: ParamId) -> Var {
        let wb = self.params.block(w);
        assert_eq!(wb.cols, self.value(x).len(), "affine input width");
        assert_eq!(wb.rows, self.params.data(b).len(), "affine bias length");
        self.push(Op::Affine { x, w, b })
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.push(Op::Relu(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.push(Op::Tanh(x))
    }

    pub fn matvec(&mut self, m: Var, rows: usize, cols: usize, v: Var) -> Var {
        assert_eq!(self.value(m).len(), rows * cols, "matrix size");
        assert_eq!(self.value(v).len(), cols, "vector length");
        self.push(Op::MatVec { m, rows, cols, v })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).len(), self.value(b).len());
        self.push(Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).len(), self.value(b).len());
        self.push(Op::Sub(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.push(Op::Scale(a, c))
    }

    pub fn lin_comb(&mut self, terms: &[(Var, f64)]) -> Var {
        assert!(!terms.is_empty());
        let n = self.value(terms[0].0).len();
        assert!(terms.iter().all(|(v, _)| self.value(*v).len() == n));
        self.push(Op::LinComb(terms.to_vec()))
    }

    pub fn sq_norm(&mut self, a: Var) -> Var {
        self.push(Op::SqNorm(a))
    }

    pub fn softmax_ce(&mut self, logits: Var, target: usize) -> Var {
        assert!(target < self.value(logits).len(), "target class out of range");
        self.push(Op::SoftmaxCe { logits, target })
    }

    pub fn param_sq_norm(&mut self, ids: &[ParamId]) -> Var {
        self.push(Op::ParamSqNorm(ids.to_vec()))
    }

    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Var {
        assert!(start + len <= self.value(x).len());
        self.push(Op::Slice { x, start, len })
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        self.push(Op::Concat(parts.to_vec()))
    }

    /// Mean of scalar nodes.
    pub fn mean(&mut self, scalars: &[Var]) -> Var {
        let c = 1.0 / scalars.len() as f64;
        let terms: Vec<(Var, f64)> = scalars.iter().map(|&v| (v, c)).collect();
        self.lin_comb(&terms)
    }

    /// Recomputes every node from the leaves and current parameters.
    pub fn replay(&self) -> Vec<Vec<f64>> {
        let mut replayed: Vec<Node> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let value = match node.op {
                Op::Input => node.value.clone(),
                _ => self.eval(&node.op, &replayed),
            };
            replayed.push(Node { value, op: node.op.clone() });
        }
        replayed.into_iter().map(|n| n.value).collect()
    }

    /// Reverse accumulation from the scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<TapeGrads, NnError> {
        if let Some(i) = self.first_non_finite {
            if i <= loss.0 {
                return Err(NnError::NonFinite { node: i });
            }
        }
        assert_eq!(self.value(loss).len(), 1, "loss must be scalar");
        let mut grads = self.params.zero_grads();
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(vec![1.0]);

        fn acc(adj: &mut [Option<Vec<f64>>], target: Var, len: usize, f: impl Fn(usize) -> f64) {
            let slot = adj[target.0].get_or_insert_with(|| vec![0.0; len]);
            for (i, s) in slot.iter_mut().enumerate() {
                *s += f(i);
            }
        }

        for idx in (0..=loss.0).rev() {
            let Some(dy) = adj[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Input => {}
                Op::Affine { x, w, b } => {
                    let xv = self.value(*x);
                    let wb = self.params.block(*w);
                    let cols = wb.cols;
                    {
                        let gw = grads.get_mut(*w);
                        for (r, &d) in dy.iter().enumerate() {
                            if d == 0.0 {
                                continue;
                            }
                            for (g, xi) in gw[r * cols..(r + 1) * cols].iter_mut().zip(xv) {
                                *g += d * xi;
                            }
                        }
                    }
                    grads.get_mut(*b).iter_mut().zip(&dy).for_each(|(g, d)| *g += d);
                    let mut dx = vec![0.0; cols];
                    for (r, &d) in dy.iter().enumerate() {
                        if d == 0.0 {
                            continue;
                        }
                        for (o, wv) in dx.iter_mut().zip(&wb.data[r * cols..(r + 1) * cols]) {
                            *o += d * wv;
                        }
                    }
                    acc(&mut adj, *x, cols, |i| dx[i]);
                }
                Op::Relu(x) => {
                    let xv = self.value(*x);
                    acc(&mut adj, *x, xv.len(), |i| if xv[i] > 0.0 { dy[i] } else { 0.0 });
                }
                Op::Tanh(x) => {
                    let y = &node.value;
                    acc(&mut adj, *x, y.len(), |i| dy[i] * (1.0 - y[i] * y[i]));
                }
                Op::MatVec { m, rows, cols, v } => {
                    let mv = self.value(*m);
                    let vv = self.value(*v);
                    let (rows, cols) = (*rows, *cols);
                    acc(&mut adj, *m, rows * cols, |k| dy[k / cols] * vv[k % cols]);
                    let mut dv = vec![0.0; cols];
                    for r in 0..rows {
                        for (o, a) in dv.iter_mut().zip(&mv[r * cols..(r + 1) * cols]) {
                            *o += dy[r] * a;
                        }
                    }
                    acc(&mut adj, *v, cols, |i| dv[i]);
                }
                Op::Add(a, b) => {
                    acc(&mut adj, *a, dy.len(), |i| dy[i]);
                    acc(&mut adj, *b, dy.len(), |i| dy[i]);
                }
                Op::Sub(a, b) => {
                    acc(&mut adj, *a, dy.len(), |i| dy[i]);
                    acc(&mut adj, *b, dy.len(), |i| -dy[i]);
                }
                Op::Scale(a, c) => acc(&mut adj, *a, dy.len(), |i| c * dy[i]),
                Op::LinComb(terms) => {
                    for (v, c) in terms {
                        acc(&mut adj, *v, dy.len(), |i| c * dy[i]);
                    }
                }
                Op::SqNorm(a) => {
                    let av = self.value(*a);
                    acc(&mut adj, *a, av.len(), |i| 2.0 * av[i] * dy[0]);
                }
                Op::SoftmaxCe { logits, target } => {
                    let p = softmax(self.value(*logits));
                    if p[*target] > CE_CLAMP {
                        let t = *target;
                        acc(&mut adj, *logits, p.len(), |i| {
                            dy[0] * (p[i] - if i == t { 1.0 } else { 0.0 })
                        });
                    }
                }
                Op::ParamSqNorm(ids) => {
                    for &id in ids {
                        let data = self.params.data(id);
                        grads.get_mut(id).iter_mut().zip(data).for_each(|(g, x)| *g += 2.0 * x * dy[0]);
                    }
                }
                Op::Slice { x, start, len } => {
                    let n = self.value(*x).len();
                    let (s, l) = (*start, *len);
                    acc(&mut adj, *x, n, |i| if i >= s && i < s + l { dy[i - s] } else { 0.0 });
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let n = self.value(*p).len();
                        acc(&mut adj, *p, n, |i| dy[offset + i]);
                        offset += n;
                    }
                }
            }
            adj[idx] = Some(dy);
        }
        Ok(TapeGrads { params: grads, adjoints: adj })
    }
}

/// Result of [`Tape::backward`].
pub struct TapeGrads {
    pub params: Gradients,
    adjoints: Vec<Option<Vec<f64>>>,
}

impl TapeGrads {
    /// Adjoint of a recorded value (zeros when the loss does not depend on it).
    pub fn wrt(&self, v: Var, len: usize) -> Vec<f64> {
        self.adjoints.get(v.0).and_then(|a| a.clone()).unwrap_or_else(|| vec![0.0; len])
    }
}
