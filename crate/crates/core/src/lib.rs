//! Cross-lingual entity alignment from jointly embedded knowledge graphs and text.
//!
//! The pipeline grounds each language's corpus against its KG, trains one joint
//! embedding space per language, then induces an orthogonal map between the
//! spaces by self-learning from a small seed alignment.

pub mod alignment;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod grounding;
pub mod kg;
pub mod pipeline;
pub mod sparse;
pub mod synth;

pub use error::{Error, Result};
