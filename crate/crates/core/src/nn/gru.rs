use super::linear::add_row_vector;
use super::params::{ParamId, ParameterStore};
use super::session::Session;
use crate::tensor::{Result, Tensor, Var};
use crate::Error;

/// Gated recurrent unit.
///
/// Gate blocks are laid out as `[update | reset | candidate]` along the
/// output axis of `input` and `bias`; `recurrent_gates` holds the update and
/// reset recurrences and `recurrent_candidate` the candidate recurrence.
#[derive(Clone, Copy, Debug)]
pub struct Gru {
    pub input: ParamId,
    pub recurrent_gates: ParamId,
    pub recurrent_candidate: ParamId,
    pub bias: ParamId,
    pub d_in: usize,
    pub hidden: usize,
}

const GATE_INIT: f64 = 0.1;

impl Gru {
    pub fn new(store: &mut ParameterStore, path: &str, d_in: usize, hidden: usize) -> Result<Self, Error> {
        Ok(Self {
            input: store.add_uniform(&format!("{path}.input"), &[d_in, 3 * hidden], GATE_INIT)?,
            recurrent_gates: store.add_uniform(&format!("{path}.recurrent_gates"), &[hidden, 2 * hidden], GATE_INIT)?,
            recurrent_candidate: store.add_uniform(
                &format!("{path}.recurrent_candidate"),
                &[hidden, hidden],
                GATE_INIT,
            )?,
            bias: store.add_const(&format!("{path}.bias"), &[3 * hidden], 0.0)?,
            d_in,
            hidden,
        })
    }

    /// Runs over the rows of `x` (n, d_in), right to left when `reverse`.
    /// Row `t` of the (n, hidden) result is the state after consuming row `t`.
    pub fn forward(&self, s: &mut Session, x: Var, reverse: bool) -> Result<Var> {
        let n = s.graph.shape(x)[0];
        let h_dim = self.hidden;
        let w = s.param(self.input);
        let projected = s.graph.matmul(x, w)?;
        let projected = add_row_vector(s, projected, self.bias)?;
        let u_gates = s.param(self.recurrent_gates);
        let u_cand = s.param(self.recurrent_candidate);
        let g = &mut s.graph;

        let mut h = g.constant(Tensor::zeros(&[1, h_dim]));
        let mut states = vec![h; n];
        let order: Vec<usize> = if reverse {
            (0..n).rev().collect()
        } else {
            (0..n).collect()
        };
        for t in order {
            let xt = g.slice(projected, 0, t, t + 1)?;
            let xz = g.slice(xt, 1, 0, h_dim)?;
            let xr = g.slice(xt, 1, h_dim, 2 * h_dim)?;
            let xc = g.slice(xt, 1, 2 * h_dim, 3 * h_dim)?;
            let hg = g.matmul(h, u_gates)?;
            let hz = g.slice(hg, 1, 0, h_dim)?;
            let hr = g.slice(hg, 1, h_dim, 2 * h_dim)?;
            let z = g.add(xz, hz)?;
            let z = g.sigmoid(z);
            let r = g.add(xr, hr)?;
            let r = g.sigmoid(r);
            let rh = g.mul(r, h)?;
            let hc = g.matmul(rh, u_cand)?;
            let c = g.add(xc, hc)?;
            let c = g.tanh(c);
            // h' = (1 - z) h + z c
            let delta = g.sub(c, h)?;
            let step = g.mul(z, delta)?;
            h = g.add(h, step)?;
            states[t] = h;
        }
        g.concat(&states, 0)
    }
}

/// Independent forward and backward GRUs, outputs concatenated per position.
#[derive(Clone, Copy, Debug)]
pub struct BiGru {
    pub forward: Gru,
    pub backward: Gru,
}

impl BiGru {
    pub fn new(store: &mut ParameterStore, path: &str, d_in: usize, hidden: usize) -> Result<Self, Error> {
        Ok(Self {
            forward: Gru::new(store, &format!("{path}.fwd"), d_in, hidden)?,
            backward: Gru::new(store, &format!("{path}.bwd"), d_in, hidden)?,
        })
    }

    pub fn output_dim(&self) -> usize {
        self.forward.hidden + self.backward.hidden
    }

    pub fn run(&self, s: &mut Session, x: Var) -> Result<Var> {
        let f = self.forward.forward(s, x, false)?;
        let b = self.backward.forward(s, x, true)?;
        s.graph.concat(&[f, b], 1)
    }
}

/// Stack of bidirectional layers with dropout on every layer input.
#[derive(Clone, Debug)]
pub struct StackedBiGru {
    pub layers: Vec<BiGru>,
    pub dropout: f64,
}

impl StackedBiGru {
    pub fn new(
        store: &mut ParameterStore,
        path: &str,
        d_in: usize,
        hidden: usize,
        layers: usize,
        dropout: f64,
    ) -> Result<Self, Error> {
        let mut stack = Vec::with_capacity(layers);
        let mut width = d_in;
        for l in 0..layers {
            stack.push(BiGru::new(store, &format!("{path}.{l}"), width, hidden)?);
            width = 2 * hidden;
        }
        Ok(Self { layers: stack, dropout })
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, BiGru::output_dim)
    }

    pub fn forward(&self, s: &mut Session, mut x: Var) -> Result<Var> {
        for layer in &self.layers {
            x = s.dropout(x, self.dropout)?;
            x = layer.run(s, x)?;
        }
        Ok(x)
    }
}
