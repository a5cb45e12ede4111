use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{NnError, ParamId, ParamStore, Tape, Var};

/// Dense row-major matrix returned by plain forward passes.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn from_flat(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.rows).map(|r| self.row(r).iter().zip(v).map(|(a, b)| a * b).sum()).collect()
    }
}

/// A fully-connected layer `x -> W x + b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AffineMap {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: ParamId,
    pub bias: ParamId,
}

impl AffineMap {
    /// Registers a layer with weights uniform in `+-sqrt(1/in_dim)` and zero bias.
    pub fn init(store: &mut ParamStore, name: &str, in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = (1.0 / in_dim as f64).sqrt();
        let w: Vec<f64> = (0..in_dim * out_dim).map(|_| rng.gen_range(-bound..=bound)).collect();
        let weight = store.add(format!("{name}.weight"), out_dim, in_dim, w);
        let bias = store.add(format!("{name}.bias"), out_dim, 1, vec![0.0; out_dim]);
        Self { in_dim, out_dim, weight, bias }
    }

    pub fn params(&self) -> [ParamId; 2] {
        [self.weight, self.bias]
    }

    pub fn apply(&self, store: &ParamStore, x: &[f64]) -> Result<Vec<f64>, NnError> {
        if x.len() != self.in_dim {
            return Err(NnError::Dimension { expected: self.in_dim, actual: x.len() });
        }
        let w = store.data(self.weight);
        let b = store.data(self.bias);
        Ok((0..self.out_dim)
            .map(|r| b[r] + w[r * self.in_dim..(r + 1) * self.in_dim].iter().zip(x).map(|(a, c)| a * c).sum::<f64>())
            .collect())
    }

    pub fn record(&self, tape: &mut Tape<'_>, x: Var) -> Var {
        tape.affine(x, self.weight, self.bias)
    }
}

/// Layer sizes of a matrix-valued vector field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VfShape {
    pub in_dim: usize,
    pub width: usize,
    /// Number of hidden layers; the net has `hidden_layers + 1` affine layers.
    pub hidden_layers: usize,
    pub out_rows: usize,
    pub out_cols: usize,
}

impl VfShape {
    pub fn validate(&self) -> Result<(), NnError> {
        if self.in_dim == 0 || self.width == 0 || self.hidden_layers == 0 || self.out_rows == 0 || self.out_cols == 0 {
            return Err(NnError::Shape(format!("all dimensions must be positive: {self:?}")));
        }
        Ok(())
    }
}

/// MLP whose flat output is read as an `out_rows x out_cols` matrix.
///
/// ReLU follows hidden layers `1..N-1`, tanh follows hidden layer `N`, and the
/// final affine layer has no activation.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorFieldNet {
    pub shape: VfShape,
    pub layers: Vec<AffineMap>,
}

impl VectorFieldNet {
    pub fn init(store: &mut ParamStore, name: &str, shape: VfShape, rng: &mut ChaCha8Rng) -> Result<Self, NnError> {
        shape.validate()?;
        let mut layers = Vec::with_capacity(shape.hidden_layers + 1);
        let mut in_dim = shape.in_dim;
        for l in 0..shape.hidden_layers {
            layers.push(AffineMap::init(store, &format!("{name}.fc{}", l + 1), in_dim, shape.width, rng));
            in_dim = shape.width;
        }
        layers.push(AffineMap::init(
            store,
            &format!("{name}.fc{}", shape.hidden_layers + 1),
            in_dim,
            shape.out_rows * shape.out_cols,
            rng,
        ));
        Ok(Self { shape, layers })
    }

    pub fn params(&self) -> Vec<ParamId> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    fn activate(&self, layer: usize, x: &mut [f64]) {
        let n = self.shape.hidden_layers;
        if layer + 1 < n {
            x.iter_mut().for_each(|v| *v = v.max(0.0));
        } else if layer + 1 == n {
            x.iter_mut().for_each(|v| *v = v.tanh());
        }
    }

    /// Plain forward pass.
    pub fn forward(&self, store: &ParamStore, v: &[f64]) -> Result<Matrix, NnError> {
        let mut h = v.to_vec();
        for (l, layer) in self.layers.iter().enumerate() {
            h = layer.apply(store, &h)?;
            self.activate(l, &mut h);
        }
        Ok(Matrix::from_flat(self.shape.out_rows, self.shape.out_cols, h))
    }

    /// Records the forward pass; the result is the flat row-major matrix.
    pub fn record(&self, tape: &mut Tape<'_>, v: Var) -> Var {
        let n = self.shape.hidden_layers;
        let mut h = v;
        for (l, layer) in self.layers.iter().enumerate() {
            h = layer.record(tape, h);
            if l + 1 < n {
                h = tape.relu(h);
            } else if l + 1 == n {
                h = tape.tanh(h);
            }
        }
        h
    }

    /// Records `field(v) * control`.
    pub fn record_apply(&self, tape: &mut Tape<'_>, v: Var, control: Var) -> Var {
        let m = self.record(tape, v);
        tape.matvec(m, self.shape.out_rows, self.shape.out_cols, control)
    }
}

/// Standalone initialization of a vector field into a fresh store.
pub fn vf_init(shape: VfShape, seed: u64) -> Result<(ParamStore, VectorFieldNet), NnError> {
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = VectorFieldNet::init(&mut store, "field", shape, &mut rng)?;
    Ok((store, net))
}

pub fn vf_forward(net: &VectorFieldNet, store: &ParamStore, v: &[f64]) -> Result<Matrix, NnError> {
    net.forward(store, v)
}
