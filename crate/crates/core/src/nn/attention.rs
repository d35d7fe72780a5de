use super::linear::{FeedForward, LayerNorm, Linear};
use super::params::ParameterStore;
use super::session::Session;
use crate::tensor::{Result, Tensor, Var};
use crate::Error;

/// Post-norm multi-head self-attention layer with a feed-forward sub-layer.
///
/// The residual stream has width `width`; queries, keys and values are each
/// projected to `attn_dim`, which is split evenly across heads.
#[derive(Clone, Copy, Debug)]
pub struct SelfAttentionBlock {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub attn_norm: LayerNorm,
    pub ffn: FeedForward,
    pub ffn_norm: LayerNorm,
    pub heads: usize,
    pub attn_dim: usize,
    pub dropout: f64,
}

/// Attention matrices of one layer, one (n, n) row-stochastic matrix per head.
#[derive(Clone, Debug)]
pub struct HeadAttention {
    pub heads: Vec<Var>,
}

impl SelfAttentionBlock {
    pub fn new(
        store: &mut ParameterStore,
        path: &str,
        width: usize,
        attn_dim: usize,
        heads: usize,
        dropout: f64,
    ) -> Result<Self, Error> {
        if heads == 0 || !attn_dim.is_multiple_of(heads) {
            return Err(Error::Config(format!(
                "attention dimension {attn_dim} is not divisible by {heads} heads"
            )));
        }
        Ok(Self {
            query: Linear::new(store, &format!("{path}.query"), width, attn_dim, true)?,
            key: Linear::new(store, &format!("{path}.key"), width, attn_dim, true)?,
            value: Linear::new(store, &format!("{path}.value"), width, attn_dim, true)?,
            output: Linear::new(store, &format!("{path}.output"), attn_dim, width, true)?,
            attn_norm: LayerNorm::new(store, &format!("{path}.attn_norm"), width)?,
            ffn: FeedForward::new(store, &format!("{path}.ffn"), width, 4 * attn_dim, dropout)?,
            ffn_norm: LayerNorm::new(store, &format!("{path}.ffn_norm"), width)?,
            heads,
            attn_dim,
            dropout,
        })
    }

    pub fn head_dim(&self) -> usize {
        self.attn_dim / self.heads
    }

    /// `x` is (n, width). `head_masks[h]`, when present, is an (n, n) 0/1
    /// matrix restricting which columns head `h` may attend to.
    pub fn forward(&self, s: &mut Session, x: Var, head_masks: &[Option<&Tensor>]) -> Result<(Var, HeadAttention)> {
        let q = self.query.forward(s, x)?;
        let k = self.key.forward(s, x)?;
        let v = self.value.forward(s, x)?;
        let dh = self.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();
        let mut contexts = Vec::with_capacity(self.heads);
        let mut weights = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let g = &mut s.graph;
            let qh = g.slice(q, 1, h * dh, (h + 1) * dh)?;
            let kh = g.slice(k, 1, h * dh, (h + 1) * dh)?;
            let vh = g.slice(v, 1, h * dh, (h + 1) * dh)?;
            let kt = g.transpose(kh)?;
            let logits = g.matmul(qh, kt)?;
            let logits = g.scale(logits, scale);
            let mask = head_masks.get(h).copied().flatten();
            let attn = g.masked_softmax(logits, mask)?;
            weights.push(attn);
            let dropped = s.dropout(attn, self.dropout)?;
            contexts.push(s.graph.matmul(dropped, vh)?);
        }
        let merged = s.graph.concat(&contexts, 1)?;
        let attended = self.output.forward(s, merged)?;
        let attended = s.dropout(attended, self.dropout)?;
        let x = s.graph.add(x, attended)?;
        let x = self.attn_norm.forward(s, x)?;

        let ff = self.ffn.forward(s, x)?;
        let ff = s.dropout(ff, self.dropout)?;
        let x = s.graph.add(x, ff)?;
        let x = self.ffn_norm.forward(s, x)?;
        Ok((x, HeadAttention { heads: weights }))
    }
}
