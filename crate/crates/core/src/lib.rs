//! Serialized-token graph transformer.
//!
//! A graph is encoded by local message passing, softly pooled into an
//! ordered, fixed-length sequence of `M` graph tokens anchored on learnable
//! basis tokens, encoded by self-attention over those tokens, and flattened
//! into a prediction head.
//!
//! Everything runs on a small reverse-mode engine in [`autodiff`] with `f64`
//! throughout, and every gradient can be checked against central differences.

pub mod ablation;
pub mod attention;
pub mod autodiff;
pub mod checkpoint;
pub mod config;
mod error;
pub mod gradcheck;
pub mod graph;
pub mod local_mp;
pub mod model;
pub mod nn;
pub mod predictor;
pub mod report;
pub mod serializer;
pub mod train;

pub use error::{Error, Result};
pub use model::{build_model, Mode, Model, ModelConfig, Trace, Variant};
