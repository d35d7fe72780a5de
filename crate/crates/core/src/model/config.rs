use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::supervision::SupervisionKind;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// BiDAF with a recurrent contextual layer.
    Base,
    /// Self-attention encoder in place of the contextual layer.
    Early,
    /// Self-attention after the bidirectional attention layer.
    Late,
    Both,
}

impl Variant {
    pub fn has_early(self) -> bool {
        matches!(self, Variant::Early | Variant::Both)
    }

    pub fn has_late(self) -> bool {
        matches!(self, Variant::Late | Variant::Both)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Location {
    Early,
    Late,
}

/// Supervision of one head of one self-attention layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub kind: SupervisionKind,
    pub location: Location,
    pub layer: usize,
    pub head: usize,
}

/// Contextual-embedding source replacing the token embedding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum ContextualEmbeddingConfig {
    /// Deterministic hash vectors mixed with their neighbours.
    Hash { dim: usize, seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub variant: Variant,
    pub early_layers: usize,
    pub late_layers: usize,
    pub heads: usize,
    pub d_model: usize,
    pub hidden: usize,
    pub word_dim: usize,
    pub char_dim: usize,
    pub char_filters: usize,
    pub char_width: usize,
    pub dropout: f64,
    /// Applied to the projected contextual embeddings.
    pub contextual_dropout: f64,
    pub lambda: f64,
    /// Multiply each supervised row's loss by its target count.
    pub weighted_supervision: bool,
    pub positional_encoding: bool,
    pub supervision: Vec<Assignment>,
    pub contextual_embedding: Option<ContextualEmbeddingConfig>,
    /// Filled from the vocabulary at training time.
    pub word_vocab: usize,
    pub char_vocab: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Base,
            early_layers: 4,
            late_layers: 1,
            heads: 4,
            d_model: 200,
            hidden: 100,
            word_dim: 100,
            char_dim: 16,
            char_filters: 100,
            char_width: 5,
            dropout: 0.1,
            contextual_dropout: 0.2,
            lambda: 0.3,
            weighted_supervision: true,
            positional_encoding: true,
            supervision: Vec::new(),
            contextual_embedding: None,
            word_vocab: 0,
            char_vocab: 0,
        }
    }
}

impl ModelConfig {
    pub fn embed_dim(&self) -> usize {
        self.word_dim + self.char_filters
    }

    /// Width of the contextual encodings entering the attention flow.
    pub fn encoding_dim(&self) -> usize {
        if self.variant.has_early() {
            self.d_model
        } else {
            2 * self.hidden
        }
    }

    /// Supervised head for `kind` at the conventional spot: the third
    /// encoder layer (or the last, if there are fewer) for early variants,
    /// the first late layer otherwise.
    pub fn default_assignment(&self, kind: SupervisionKind) -> Assignment {
        if self.variant.has_early() {
            Assignment {
                kind,
                location: Location::Early,
                layer: 2.min(self.early_layers.saturating_sub(1)),
                head: 0,
            }
        } else {
            Assignment {
                kind,
                location: Location::Late,
                layer: 0,
                head: 0,
            }
        }
    }

    pub fn supervision_kinds(&self) -> Vec<SupervisionKind> {
        let mut kinds: Vec<SupervisionKind> = self.supervision.iter().map(|a| a.kind).collect();
        kinds.sort();
        kinds.dedup();
        kinds
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.heads == 0 || !self.d_model.is_multiple_of(self.heads) {
            return bad(format!(
                "d_model {} is not divisible by {} heads",
                self.d_model, self.heads
            ));
        }
        if self.hidden == 0
            || self.word_dim == 0
            || self.char_dim == 0
            || self.char_filters == 0
            || self.char_width == 0
        {
            return bad("layer sizes must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) || !(0.0..1.0).contains(&self.contextual_dropout) {
            return bad("dropout rates must lie in [0, 1)".into());
        }
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return bad(format!("lambda must be finite and nonnegative, got {}", self.lambda));
        }
        if self.word_vocab < 2 || self.char_vocab < 2 {
            return bad("vocabulary sizes are unset".into());
        }
        if self.variant.has_early() {
            if self.early_layers == 0 {
                return bad("early variants need at least one encoder layer".into());
            }
            if self.embed_dim() != self.d_model {
                return bad(format!(
                    "word_dim + char_filters = {} must equal d_model = {} for early variants",
                    self.embed_dim(),
                    self.d_model
                ));
            }
        }
        if self.variant.has_late() && self.late_layers == 0 {
            return bad("late variants need at least one self-attention layer".into());
        }
        let mut seen = HashSet::new();
        for a in &self.supervision {
            let layers = match a.location {
                Location::Early if self.variant.has_early() => self.early_layers,
                Location::Late if self.variant.has_late() => self.late_layers,
                loc => {
                    return bad(format!(
                        "variant {:?} has no {loc:?} self-attention for {}",
                        self.variant, a.kind
                    ))
                }
            };
            if a.layer >= layers || a.head >= self.heads {
                return bad(format!(
                    "{} assigned to {:?} layer {} head {}, but there are {layers} layers of {} heads",
                    a.kind, a.location, a.layer, a.head, self.heads
                ));
            }
            if !seen.insert((a.location, a.layer, a.head)) {
                return bad(format!(
                    "{:?} layer {} head {} carries two supervisions",
                    a.location, a.layer, a.head
                ));
            }
        }
        Ok(())
    }
}
