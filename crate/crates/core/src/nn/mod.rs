//! Parameterized layers: embeddings, character CNN, GRUs, layer
//! normalization, multi-head self-attention and feed-forward blocks.

mod attention;
mod check;
mod embed;
mod gru;
mod linear;
mod params;
mod session;

pub use attention::{HeadAttention, SelfAttentionBlock};
pub use check::{parameter_gradient_check, ABS_NOISE};
pub use embed::{CharCnn, TokenEmbedder, CHAR_PAD};
pub use gru::{BiGru, Gru, StackedBiGru};
pub use linear::{positional_encoding, Embedding, FeedForward, LayerNorm, Linear};
pub use params::{ParamId, ParameterStore};
pub use session::{Mode, Session};
