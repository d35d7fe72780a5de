use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::params::{ParamId, ParameterStore};
use crate::tensor::{Graph, Result, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// One forward (and optionally backward) pass over a frozen parameter store.
///
/// Parameters are bound onto the tape lazily and by reference. In train mode
/// they require gradients and dropout is active.
pub struct Session<'p> {
    pub graph: Graph<'p>,
    store: &'p ParameterStore,
    bound: Vec<Option<Var>>,
    mode: Mode,
    rng: ChaCha8Rng,
}

impl<'p> Session<'p> {
    pub fn new(store: &'p ParameterStore, mode: Mode, seed: u64) -> Self {
        Self {
            graph: Graph::new(),
            store,
            bound: vec![None; store.len()],
            mode,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn is_train(&self) -> bool {
        self.mode == Mode::Train
    }

    pub fn store(&self) -> &'p ParameterStore {
        self.store
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.bound[id.0] {
            return v;
        }
        let v = self.graph.borrowed(self.store.get(id), self.is_train());
        self.bound[id.0] = Some(v);
        v
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.graph.constant(t)
    }

    /// Inverted dropout; identity outside train mode or at rate 0.
    pub fn dropout(&mut self, x: Var, rate: f64) -> Result<Var> {
        if !self.is_train() || rate <= 0.0 {
            return Ok(x);
        }
        let keep = 1.0 - rate;
        let shape = self.graph.shape(x).to_vec();
        let len = self.graph.value(x).len();
        let mask = (0..len)
            .map(|_| if self.rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        let mask = self.graph.constant(Tensor::new(&shape, mask)?);
        self.graph.mul(x, mask)
    }

    /// Gradients for every parameter touched by the last backward sweep,
    /// aligned with the store's ids.
    pub fn param_grads(&mut self) -> Vec<Option<Vec<f64>>> {
        let bound = std::mem::take(&mut self.bound);
        let grads = bound.iter().map(|b| b.and_then(|v| self.graph.take_grad(v))).collect();
        self.bound = bound;
        grads
    }
}
