use crate::nn::{LayerNorm, ParamId, ParameterStore, Session};
use crate::tensor::{Result, Var};
use crate::Error;

/// Bidirectional context/query attention with a trilinear similarity
/// `S_ij = w_h . h_i + w_u . u_j + (h_i * w_hu) . u_j`.
#[derive(Clone, Copy, Debug)]
pub struct AttentionFlow {
    pub w_h: ParamId,
    pub w_u: ParamId,
    pub w_hu: ParamId,
    pub norm: LayerNorm,
    pub dim: usize,
}

/// Flow result: merged `[h; u~; h*u~; h*h~]` after layer norm, plus the two
/// attention distributions.
#[derive(Clone, Copy, Debug)]
pub struct FlowOutput {
    pub merged: Var,
    /// (n, m) context-to-query weights.
    pub c2q: Var,
    /// (1, n) query-to-context weights.
    pub q2c: Var,
}

impl AttentionFlow {
    pub fn new(store: &mut ParameterStore, path: &str, dim: usize) -> Result<Self, Error> {
        Ok(Self {
            w_h: store.add_xavier(&format!("{path}.w_h"), dim, 1)?,
            w_u: store.add_xavier(&format!("{path}.w_u"), dim, 1)?,
            w_hu: store.add_uniform(&format!("{path}.w_hu"), &[dim], (3.0 / dim as f64).sqrt())?,
            norm: LayerNorm::new(store, &format!("{path}.norm"), 4 * dim)?,
            dim,
        })
    }

    /// `h` is (n, d) context, `u` is (m, d) query.
    pub fn similarity(&self, s: &mut Session, h: Var, u: Var) -> Result<Var> {
        let n = s.graph.shape(h)[0];
        let m = s.graph.shape(u)[0];
        let w_h = s.param(self.w_h);
        let w_u = s.param(self.w_u);
        let w_hu = s.param(self.w_hu);
        let g = &mut s.graph;
        let a = g.matmul(h, w_h)?;
        let a = g.broadcast(a, &[n, m])?;
        let b = g.matmul(u, w_u)?;
        let b = g.transpose(b)?;
        let b = g.broadcast(b, &[n, m])?;
        let hw = g.broadcast(w_hu, &[n, self.dim])?;
        let hw = g.mul(h, hw)?;
        let ut = g.transpose(u)?;
        let c = g.matmul(hw, ut)?;
        let ab = g.add(a, b)?;
        g.add(ab, c)
    }

    pub fn forward(&self, s: &mut Session, h: Var, u: Var) -> Result<FlowOutput> {
        let n = s.graph.shape(h)[0];
        let sim = self.similarity(s, h, u)?;
        let g = &mut s.graph;
        let c2q = g.masked_softmax(sim, None)?;
        let attended_query = g.matmul(c2q, u)?;
        let best = g.max_axis(sim, 1)?;
        let best = g.reshape(best, &[1, n])?;
        let q2c = g.masked_softmax(best, None)?;
        let attended_context = g.matmul(q2c, h)?;
        let attended_context = g.broadcast(attended_context, &[n, self.dim])?;
        let hu = g.mul(h, attended_query)?;
        let hh = g.mul(h, attended_context)?;
        let merged = g.concat(&[h, attended_query, hu, hh], 1)?;
        let merged = self.norm.forward(s, merged)?;
        Ok(FlowOutput { merged, c2q, q2c })
    }
}
