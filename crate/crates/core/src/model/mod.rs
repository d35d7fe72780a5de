//! BiDAF and its self-attention variants.
//!
//! Every instance of a batch runs on its own tape at its true length, so
//! padding never reaches the computation and batched results equal
//! single-instance results exactly.

mod config;
mod flow;
mod hook;

pub use config::{Assignment, ContextualEmbeddingConfig, Location, ModelConfig, Variant};
pub use flow::{AttentionFlow, FlowOutput};
pub use hook::{ContextualEmbeddingSource, HashEmbedding};

use std::collections::{BTreeMap, HashMap};

use crate::data::Batch;
use crate::nn::{
    positional_encoding, HeadAttention, LayerNorm, Linear, Mode, ParameterStore, SelfAttentionBlock, Session,
    StackedBiGru, TokenEmbedder,
};
use crate::objective::{self, LossBreakdown};
use crate::supervision::{SupervisionKind, SupervisionMatrix};
use crate::tensor::{Tensor, Var};
use crate::{Error, Result};

/// How context and query embeddings become contextual encodings.
#[derive(Clone, Debug)]
pub enum ContextualStage {
    BiGru(StackedBiGru),
    SelfAttention(Vec<SelfAttentionBlock>),
    /// Passes embeddings through unchanged.
    Identity,
}

/// External embeddings projected to the token-embedding width.
pub struct ContextualHook {
    pub source: Box<dyn ContextualEmbeddingSource>,
    pub projection: Linear,
}

impl std::fmt::Debug for ContextualHook {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ContextualHook")
            .field("dim", &self.source.dim())
            .field("projection", &self.projection)
            .finish()
    }
}

#[derive(Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub embed: TokenEmbedder,
    pub hook: Option<ContextualHook>,
    pub contextual: ContextualStage,
    pub flow: AttentionFlow,
    pub late: Vec<SelfAttentionBlock>,
    pub modeling: StackedBiGru,
    pub modeling_norm: LayerNorm,
    pub output: Linear,
    supervised: HashMap<(Location, usize, usize), SupervisionKind>,
}

/// One instance sliced out of a batch at its real length.
#[derive(Clone, Debug)]
pub struct InstanceInput<'a> {
    pub context_ids: &'a [usize],
    pub context_chars: &'a [Vec<usize>],
    pub query_ids: &'a [usize],
    pub query_chars: &'a [Vec<usize>],
    pub context_tokens: &'a [String],
    pub query_tokens: &'a [String],
    pub answer_positions: &'a [usize],
    pub window: Option<Tensor>,
    pub supervision: BTreeMap<SupervisionKind, SupervisionMatrix>,
}

impl Batch {
    pub fn instance(&self, b: usize) -> InstanceInput<'_> {
        let n = self.context_len(b);
        let m = self.query_len(b);
        let window = self.windows[b].as_ref().map(|w| {
            let data = (0..n).flat_map(|i| w.row(i)[..n].iter().copied()).collect();
            Tensor::new(&[n, n], data).expect("nonempty context")
        });
        InstanceInput {
            context_ids: &self.context_ids[b][..n],
            context_chars: &self.context_chars[b][..n],
            query_ids: &self.query_ids[b][..m],
            query_chars: &self.query_chars[b][..m],
            context_tokens: &self.context_tokens[b],
            query_tokens: &self.query_tokens[b],
            answer_positions: &self.answer_positions[b],
            window,
            supervision: self.supervision[b].iter().map(|(&k, s)| (k, s.resized(n))).collect(),
        }
    }
}

/// Tape handles of one instance's forward pass.
#[derive(Clone, Debug)]
pub struct Trace {
    /// (n) unnormalized answer scores.
    pub logits: Var,
    /// (n) answer distribution over context positions.
    pub probs: Var,
    /// Context-path attention of each encoder layer.
    pub early: Vec<HeadAttention>,
    pub late: Vec<HeadAttention>,
}

impl Trace {
    pub fn head(&self, location: Location, layer: usize, head: usize) -> Option<Var> {
        let layers = match location {
            Location::Early => &self.early,
            Location::Late => &self.late,
        };
        layers.get(layer).and_then(|l| l.heads.get(head)).copied()
    }
}

/// Attention matrices of one instance, indexed `[layer][head]`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct InstanceAttention {
    pub early: Vec<Vec<Tensor>>,
    pub late: Vec<Vec<Tensor>>,
}

impl InstanceAttention {
    pub fn head(&self, location: Location, layer: usize, head: usize) -> Option<&Tensor> {
        let layers = match location {
            Location::Early => &self.early,
            Location::Late => &self.late,
        };
        layers.get(layer).and_then(|l| l.get(head))
    }
}

#[derive(Clone, Debug)]
pub struct ForwardOutput {
    /// (B, n_max); zero beyond each context.
    pub answer_logits: Tensor,
    /// (B, n_max); zero beyond each context.
    pub answer_probs: Tensor,
    pub attention: Vec<InstanceAttention>,
}

/// Mean loss and mean parameter gradients over a batch.
#[derive(Clone, Debug)]
pub struct BatchGradients {
    pub loss: LossBreakdown,
    pub grads: Vec<Vec<f64>>,
}

fn instance_seed(seed: u64, b: usize) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(b as u64)
}

impl Model {
    /// Builds the model and its freshly initialized parameters.
    pub fn assemble(config: &ModelConfig, seed: u64) -> Result<(Self, ParameterStore)> {
        config.validate()?;
        let c = config;
        let mut store = ParameterStore::new(seed);
        let embed = TokenEmbedder::new(
            &mut store,
            "embed",
            c.word_vocab,
            c.word_dim,
            c.char_vocab,
            c.char_dim,
            c.char_filters,
            c.char_width,
            c.dropout,
        )?;
        let hook = match &c.contextual_embedding {
            Some(ContextualEmbeddingConfig::Hash { dim, seed }) => Some(ContextualHook {
                source: Box::new(HashEmbedding { dim: *dim, seed: *seed }),
                projection: Linear::new(&mut store, "contextual_projection", *dim, c.embed_dim(), true)?,
            }),
            None => None,
        };
        let contextual = if c.variant.has_early() {
            let blocks = (0..c.early_layers)
                .map(|l| {
                    SelfAttentionBlock::new(
                        &mut store,
                        &format!("encoder.{l}"),
                        c.d_model,
                        c.d_model,
                        c.heads,
                        c.dropout,
                    )
                })
                .collect::<Result<_>>()?;
            ContextualStage::SelfAttention(blocks)
        } else {
            ContextualStage::BiGru(StackedBiGru::new(
                &mut store,
                "contextual",
                c.embed_dim(),
                c.hidden,
                1,
                c.dropout,
            )?)
        };
        let d = c.encoding_dim();
        let flow = AttentionFlow::new(&mut store, "flow", d)?;
        let late = if c.variant.has_late() {
            (0..c.late_layers)
                .map(|l| {
                    SelfAttentionBlock::new(&mut store, &format!("late.{l}"), 4 * d, c.d_model, c.heads, c.dropout)
                })
                .collect::<Result<_>>()?
        } else {
            Vec::new()
        };
        let modeling = StackedBiGru::new(&mut store, "modeling", 4 * d, c.hidden, 2, c.dropout)?;
        let modeling_norm = LayerNorm::new(&mut store, "modeling_norm", 2 * c.hidden)?;
        let output = Linear::new(&mut store, "output", 4 * d + 2 * c.hidden, 1, true)?;
        let supervised = c
            .supervision
            .iter()
            .map(|a| ((a.location, a.layer, a.head), a.kind))
            .collect();
        let model = Self {
            config: c.clone(),
            embed,
            hook,
            contextual,
            flow,
            late,
            modeling,
            modeling_norm,
            output,
            supervised,
        };
        log::debug!(
            "assembled {:?} model with {} parameters",
            c.variant,
            store.num_scalars()
        );
        Ok((model, store))
    }

    /// Swaps in a different external embedding source of the configured
    /// width.
    pub fn set_contextual_source(&mut self, source: Box<dyn ContextualEmbeddingSource>) -> Result<()> {
        let hook = self
            .hook
            .as_mut()
            .ok_or_else(|| Error::Config("model was built without a contextual embedding hook".into()))?;
        if source.dim() != hook.projection.d_in {
            return Err(Error::Config(format!(
                "contextual source has width {}, projection expects {}",
                source.dim(),
                hook.projection.d_in
            )));
        }
        hook.source = source;
        Ok(())
    }

    /// Checks that `store` has exactly this model's parameter paths and
    /// shapes.
    pub fn check_parameters(&self, store: &ParameterStore) -> Result<()> {
        let (_, fresh) = Self::assemble(&self.config, 0)?;
        let mut probe = fresh;
        probe.load_from(store)
    }

    fn head_masks<'t>(&self, location: Location, layer: usize, window: Option<&'t Tensor>) -> Vec<Option<&'t Tensor>> {
        (0..self.config.heads)
            .map(|h| match self.supervised.get(&(location, layer, h)) {
                Some(SupervisionKind::DepParse) => window,
                _ => None,
            })
            .collect()
    }

    fn embed_tokens(&self, s: &mut Session, ids: &[usize], chars: &[Vec<usize>], tokens: &[String]) -> Result<Var> {
        match &self.hook {
            Some(hook) => {
                let external = s.constant(hook.source.embed(tokens));
                let x = hook.projection.forward(s, external)?;
                Ok(s.dropout(x, self.config.contextual_dropout)?)
            }
            None => Ok(self.embed.forward(s, ids, chars)?),
        }
    }

    /// Contextual stage. Encoder attention is appended to `capture`.
    fn encode(
        &self,
        s: &mut Session,
        x: Var,
        window: Option<&Tensor>,
        capture: &mut Vec<HeadAttention>,
    ) -> Result<Var> {
        match &self.contextual {
            ContextualStage::BiGru(gru) => Ok(gru.forward(s, x)?),
            ContextualStage::Identity => Ok(x),
            ContextualStage::SelfAttention(blocks) => {
                let n = s.graph.shape(x)[0];
                let mut x = x;
                if self.config.positional_encoding {
                    let pe = s.constant(positional_encoding(n, self.config.d_model));
                    x = s.graph.add(x, pe)?;
                }
                x = s.dropout(x, self.config.dropout)?;
                for (l, block) in blocks.iter().enumerate() {
                    let masks = self.head_masks(Location::Early, l, window);
                    let (y, attn) = block.forward(s, x, &masks)?;
                    capture.push(attn);
                    x = y;
                }
                Ok(x)
            }
        }
    }

    /// Forward pass of one instance on `s`.
    pub fn trace(&self, s: &mut Session, input: &InstanceInput) -> Result<Trace> {
        if input.context_ids.is_empty() {
            return Err(Error::Data("empty context".into()));
        }
        if input.query_ids.is_empty() {
            return Err(Error::Data("empty query".into()));
        }
        let n = input.context_ids.len();
        let window = input.window.as_ref();
        let x = self.embed_tokens(s, input.context_ids, input.context_chars, input.context_tokens)?;
        let q = self.embed_tokens(s, input.query_ids, input.query_chars, input.query_tokens)?;
        let mut early = Vec::new();
        let h = self.encode(s, x, window, &mut early)?;
        let u = self.encode(s, q, None, &mut Vec::new())?;

        let mut g = self.flow.forward(s, h, u)?.merged;
        let mut late = Vec::with_capacity(self.late.len());
        for (l, block) in self.late.iter().enumerate() {
            let masks = self.head_masks(Location::Late, l, window);
            let (y, attn) = block.forward(s, g, &masks)?;
            late.push(attn);
            g = y;
        }
        let m = self.modeling.forward(s, g)?;
        let m = self.modeling_norm.forward(s, m)?;
        let features = s.graph.concat(&[g, m], 1)?;
        let features = s.dropout(features, self.config.dropout)?;
        let logits = self.output.forward(s, features)?;
        let logits = s.graph.reshape(logits, &[n])?;
        let probs = s.graph.masked_softmax(logits, None)?;
        Ok(Trace {
            logits,
            probs,
            early,
            late,
        })
    }

    /// Combined objective of one traced instance.
    pub fn loss(&self, s: &mut Session, trace: &Trace, input: &InstanceInput) -> Result<(Var, LossBreakdown)> {
        let g = &mut s.graph;
        let answer = objective::answer_loss(g, trace.probs, input.answer_positions)?;
        let mut parts = Vec::with_capacity(self.config.supervision.len());
        let mut total_aux: Option<Var> = None;
        for a in &self.config.supervision {
            let targets = input
                .supervision
                .get(&a.kind)
                .ok_or_else(|| Error::Data(format!("batch carries no {} targets", a.kind)))?;
            let attn = trace.head(a.location, a.layer, a.head).ok_or_else(|| {
                Error::Config(format!(
                    "no attention at {:?} layer {} head {}",
                    a.location, a.layer, a.head
                ))
            })?;
            match objective::supervision_loss(g, attn, targets, self.config.weighted_supervision)? {
                Some(l) => {
                    parts.push((a.kind, g.value(l).item()));
                    total_aux = Some(match total_aux {
                        Some(t) => g.add(t, l)?,
                        None => l,
                    });
                }
                None => parts.push((a.kind, 0.0)),
            }
        }
        let breakdown = objective::total_loss(g.value(answer).item(), &parts, self.config.lambda)?;
        let total = match total_aux {
            Some(aux) if self.config.lambda != 0.0 => {
                let aux = g.scale(aux, self.config.lambda);
                g.add(answer, aux)?
            }
            _ => answer,
        };
        Ok((total, breakdown))
    }

    /// Evaluates every instance of `batch`. Dropout is drawn from `seed` in
    /// train mode.
    pub fn forward(&self, store: &ParameterStore, batch: &Batch, mode: Mode, seed: u64) -> Result<ForwardOutput> {
        let b_count = batch.len();
        let n_max = batch.max_context_len().max(1);
        let mut logits = Tensor::zeros(&[b_count, n_max]);
        let mut probs = Tensor::zeros(&[b_count, n_max]);
        let mut attention = Vec::with_capacity(b_count);
        for b in 0..b_count {
            let input = batch.instance(b);
            let mut s = Session::new(store, mode, instance_seed(seed, b));
            let trace = self.trace(&mut s, &input)?;
            let n = input.context_ids.len();
            logits.data_mut()[b * n_max..b * n_max + n].copy_from_slice(s.graph.value(trace.logits).data());
            probs.data_mut()[b * n_max..b * n_max + n].copy_from_slice(s.graph.value(trace.probs).data());
            let collect = |layers: &[HeadAttention]| -> Vec<Vec<Tensor>> {
                layers
                    .iter()
                    .map(|l| l.heads.iter().map(|&h| s.graph.value(h).clone()).collect())
                    .collect()
            };
            attention.push(InstanceAttention {
                early: collect(&trace.early),
                late: collect(&trace.late),
            });
        }
        Ok(ForwardOutput {
            answer_logits: logits,
            answer_probs: probs,
            attention,
        })
    }

    /// Per-instance losses of `batch` in eval mode (no gradients).
    pub fn losses(&self, store: &ParameterStore, batch: &Batch) -> Result<Vec<LossBreakdown>> {
        (0..batch.len())
            .map(|b| {
                let input = batch.instance(b);
                let mut s = Session::new(store, Mode::Eval, 0);
                let trace = self.trace(&mut s, &input)?;
                Ok(self.loss(&mut s, &trace, &input)?.1)
            })
            .collect()
    }

    /// Mean training loss and gradients over `batch`, dropout active.
    pub fn loss_and_grads(&self, store: &ParameterStore, batch: &Batch, seed: u64) -> Result<BatchGradients> {
        let mut grads: Vec<Vec<f64>> = store.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        let mut parts = Vec::with_capacity(batch.len());
        let scale = 1.0 / batch.len() as f64;
        for b in 0..batch.len() {
            let input = batch.instance(b);
            let mut s = Session::new(store, Mode::Train, instance_seed(seed, b));
            let trace = self.trace(&mut s, &input)?;
            let (total, breakdown) = self.loss(&mut s, &trace, &input)?;
            s.graph.backward(total)?;
            for (acc, g) in grads.iter_mut().zip(s.param_grads()) {
                if let Some(g) = g {
                    acc.iter_mut().zip(g).for_each(|(a, v)| *a += scale * v);
                }
            }
            parts.push(breakdown);
        }
        let loss = objective::mean_breakdown(&parts).ok_or_else(|| Error::Data("empty batch".into()))?;
        Ok(BatchGradients { loss, grads })
    }
}
