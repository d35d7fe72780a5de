//! BiDAF reading comprehension with supervised multi-head self-attention.
//!
//! The crate bundles a small reverse-mode autodiff engine ([`tensor`]),
//! neural layers ([`nn`]), attention-target construction from linguistic
//! annotation ([`supervision`]), losses ([`objective`]), the model variants
//! ([`model`]), decoding and evaluation ([`decode`]), training ([`train`]),
//! corpus handling ([`data`]) and the command-line front end ([`cli`]).

mod error;

pub mod cli;
pub mod data;
pub mod decode;
pub mod model;
pub mod nn;
pub mod objective;
pub mod supervision;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
