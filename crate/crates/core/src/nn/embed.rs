use super::linear::{add_row_vector, Embedding};
use super::params::{ParamId, ParameterStore};
use super::session::Session;
use crate::tensor::{Result, TensorError, Var};
use crate::Error;

/// Character id reserved for padding short tokens.
pub const CHAR_PAD: usize = 0;

/// Convolution over character positions followed by max-pooling.
#[derive(Clone, Copy, Debug)]
pub struct CharCnn {
    pub chars: Embedding,
    pub filters: ParamId,
    pub bias: ParamId,
    pub width: usize,
    pub n_filters: usize,
}

impl CharCnn {
    pub fn new(
        store: &mut ParameterStore,
        path: &str,
        char_vocab: usize,
        char_dim: usize,
        n_filters: usize,
        width: usize,
    ) -> Result<Self, Error> {
        let chars = Embedding::new(store, &format!("{path}.chars"), char_vocab, char_dim)?;
        let filters = store.add_xavier(&format!("{path}.filters"), width * char_dim, n_filters)?;
        let bias = store.add_const(&format!("{path}.bias"), &[n_filters], 0.0)?;
        Ok(Self {
            chars,
            filters,
            bias,
            width,
            n_filters,
        })
    }

    /// `x` is (n, c_max, d_char); returns (n, n_filters).
    pub fn forward(&self, s: &mut Session, x: Var) -> Result<Var> {
        let shape = s.graph.shape(x).to_vec();
        let [n, c_max, d_char] = shape[..] else {
            return Err(TensorError::InvalidShape {
                len: s.graph.value(x).len(),
                shape,
            });
        };
        if c_max < self.width {
            return Err(TensorError::Domain {
                op: "char_cnn",
                reason: format!(
                    "{c_max} character positions is shorter than filter width {}",
                    self.width
                ),
            });
        }
        let positions = c_max - self.width + 1;
        let mut rows = Vec::with_capacity(n * positions * self.width);
        for t in 0..n {
            for p in 0..positions {
                rows.extend((0..self.width).map(|w| t * c_max + p + w));
            }
        }
        let g = &mut s.graph;
        let flat = g.reshape(x, &[n * c_max, d_char])?;
        let windows = g.gather_rows(flat, &rows)?;
        let windows = g.reshape(windows, &[n * positions, self.width * d_char])?;
        let filters = s.param(self.filters);
        let conv = s.graph.matmul(windows, filters)?;
        let conv = add_row_vector(s, conv, self.bias)?;
        let conv = s.graph.reshape(conv, &[n, positions, self.n_filters])?;
        s.graph.max_axis(conv, 1)
    }

    /// Looks up per-token character ids, right-padding every token with
    /// [`CHAR_PAD`] to `max(longest token, filter width)`.
    pub fn forward_ids(&self, s: &mut Session, chars: &[Vec<usize>]) -> Result<Var> {
        let c_max = chars.iter().map(Vec::len).max().unwrap_or(0).max(self.width);
        let mut ids = Vec::with_capacity(chars.len() * c_max);
        for token in chars {
            ids.extend_from_slice(token);
            ids.extend(std::iter::repeat_n(CHAR_PAD, c_max - token.len()));
        }
        let emb = self.chars.forward(s, &ids)?;
        let emb = s.graph.reshape(emb, &[chars.len(), c_max, self.chars.dim])?;
        self.forward(s, emb)
    }
}

/// Word embedding concatenated with the character CNN response.
#[derive(Clone, Copy, Debug)]
pub struct TokenEmbedder {
    pub words: Embedding,
    pub chars: CharCnn,
    pub dropout: f64,
}

impl TokenEmbedder {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParameterStore,
        path: &str,
        word_vocab: usize,
        word_dim: usize,
        char_vocab: usize,
        char_dim: usize,
        n_filters: usize,
        width: usize,
        dropout: f64,
    ) -> Result<Self, Error> {
        Ok(Self {
            words: Embedding::new(store, &format!("{path}.words"), word_vocab, word_dim)?,
            chars: CharCnn::new(
                store,
                &format!("{path}.char_cnn"),
                char_vocab,
                char_dim,
                n_filters,
                width,
            )?,
            dropout,
        })
    }

    pub fn dim(&self) -> usize {
        self.words.dim + self.chars.n_filters
    }

    pub fn forward(&self, s: &mut Session, token_ids: &[usize], char_ids: &[Vec<usize>]) -> Result<Var> {
        if token_ids.len() != char_ids.len() || token_ids.is_empty() {
            return Err(TensorError::Domain {
                op: "embed_tokens",
                reason: format!("{} tokens but {} character sequences", token_ids.len(), char_ids.len()),
            });
        }
        let words = self.words.forward(s, token_ids)?;
        let chars = self.chars.forward_ids(s, char_ids)?;
        let chars = s.dropout(chars, self.dropout)?;
        s.graph.concat(&[words, chars], 1)
    }
}
