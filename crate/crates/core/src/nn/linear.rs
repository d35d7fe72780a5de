use super::params::{ParamId, ParameterStore};
use super::session::Session;
use crate::tensor::{Result, Tensor, TensorError, Var};
use crate::Error;

/// Affine map `x W + b` over the rows of an (n, d_in) input.
#[derive(Clone, Copy, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub d_in: usize,
    pub d_out: usize,
}

impl Linear {
    pub fn new(store: &mut ParameterStore, path: &str, d_in: usize, d_out: usize, bias: bool) -> Result<Self, Error> {
        let weight = store.add_xavier(&format!("{path}.weight"), d_in, d_out)?;
        let bias = if bias {
            Some(store.add_const(&format!("{path}.bias"), &[d_out], 0.0)?)
        } else {
            None
        };
        Ok(Self {
            weight,
            bias,
            d_in,
            d_out,
        })
    }

    pub fn forward(&self, s: &mut Session, x: Var) -> Result<Var> {
        let w = s.param(self.weight);
        let y = s.graph.matmul(x, w)?;
        match self.bias {
            Some(b) => add_row_vector(s, y, b),
            None => Ok(y),
        }
    }
}

/// Adds the parameter vector `b` to every row of `x`.
pub(crate) fn add_row_vector(s: &mut Session, x: Var, b: ParamId) -> Result<Var> {
    let shape = s.graph.shape(x).to_vec();
    let b = s.param(b);
    let bb = s.graph.broadcast(b, &shape)?;
    s.graph.add(x, bb)
}

/// Lookup table of shape (vocab, dim).
#[derive(Clone, Copy, Debug)]
pub struct Embedding {
    pub table: ParamId,
    pub vocab: usize,
    pub dim: usize,
}

impl Embedding {
    pub fn new(store: &mut ParameterStore, path: &str, vocab: usize, dim: usize) -> Result<Self, Error> {
        let table = store.add_uniform(&format!("{path}.table"), &[vocab, dim], 0.05)?;
        Ok(Self { table, vocab, dim })
    }

    pub fn forward(&self, s: &mut Session, ids: &[usize]) -> Result<Var> {
        if let Some(&bad) = ids.iter().find(|&&i| i >= self.vocab) {
            return Err(TensorError::IndexOutOfBounds {
                op: "embedding",
                index: bad,
                extent: self.vocab,
            });
        }
        let t = s.param(self.table);
        s.graph.gather_rows(t, ids)
    }
}

/// Post-hoc normalization of the last axis with learned gain and bias.
#[derive(Clone, Copy, Debug)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
    pub dim: usize,
    pub eps: f64,
}

impl LayerNorm {
    pub const DEFAULT_EPS: f64 = 1e-6;

    pub fn new(store: &mut ParameterStore, path: &str, dim: usize) -> Result<Self, Error> {
        Ok(Self {
            gain: store.add_const(&format!("{path}.gain"), &[dim], 1.0)?,
            bias: store.add_const(&format!("{path}.bias"), &[dim], 0.0)?,
            dim,
            eps: Self::DEFAULT_EPS,
        })
    }

    /// `x` is (rows, dim); statistics use the population variance.
    pub fn forward(&self, s: &mut Session, x: Var) -> Result<Var> {
        let shape = s.graph.shape(x).to_vec();
        let rows = shape[0];
        let g = &mut s.graph;
        let mean = g.mean_axis(x, 1)?;
        let mean = g.reshape(mean, &[rows, 1])?;
        let mean = g.broadcast(mean, &shape)?;
        let centered = g.sub(x, mean)?;
        let sq = g.mul(centered, centered)?;
        let var = g.mean_axis(sq, 1)?;
        let var = g.add_scalar(var, self.eps);
        let std = g.sqrt(var)?;
        let std = g.reshape(std, &[rows, 1])?;
        let std = g.broadcast(std, &shape)?;
        let normed = g.div(centered, std)?;
        let gain = s.param(self.gain);
        let gain = s.graph.broadcast(gain, &shape)?;
        let scaled = s.graph.mul(normed, gain)?;
        add_row_vector(s, scaled, self.bias)
    }
}

/// Position-wise two-layer perceptron with a ReLU in between.
#[derive(Clone, Copy, Debug)]
pub struct FeedForward {
    pub inner: Linear,
    pub outer: Linear,
    pub dropout: f64,
}

impl FeedForward {
    pub fn new(store: &mut ParameterStore, path: &str, dim: usize, inner: usize, dropout: f64) -> Result<Self, Error> {
        Ok(Self {
            inner: Linear::new(store, &format!("{path}.inner"), dim, inner, true)?,
            outer: Linear::new(store, &format!("{path}.outer"), inner, dim, true)?,
            dropout,
        })
    }

    pub fn forward(&self, s: &mut Session, x: Var) -> Result<Var> {
        let h = self.inner.forward(s, x)?;
        let h = s.graph.relu(h);
        let h = s.dropout(h, self.dropout)?;
        self.outer.forward(s, h)
    }
}

/// Sinusoidal position signal of shape (n, dim).
pub fn positional_encoding(n: usize, dim: usize) -> Tensor {
    let mut data = vec![0.0; n * dim];
    for pos in 0..n {
        for i in 0..dim {
            let pair = (i / 2) as f64;
            let angle = pos as f64 / 10000f64.powf(2.0 * pair / dim as f64);
            data[pos * dim + i] = if i % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    Tensor::new(&[n, dim], data).expect("positive extents")
}
