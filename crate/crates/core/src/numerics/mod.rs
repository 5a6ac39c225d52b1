//! Dense tensors, reverse-mode differentiation, small MLPs, Adam and Polyak
//! averaging.

mod adam;
pub mod checkpoint;
pub mod gradcheck;
mod graph;
mod mlp;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use graph::{apply_norm_floor, cosine, huber, softmax_in_place, Gradients, Graph, Var};
pub use mlp::{gradient, Activation, Mlp, MlpBinding, TargetPair};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("loss must be a scalar, got shape {shape:?}")]
    NotScalar { shape: Vec<usize> },
    #[error("non-finite value produced at node {node} ({op})")]
    NonFinite { node: usize, op: &'static str },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
}
