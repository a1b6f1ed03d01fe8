//! Deterministic numerical kernel: dense matrices, truncated SVD, a small
//! rectifier network with exact backpropagation, Adam, and samplers.

mod adam;
mod matrix;
mod mlp;
mod rng;
pub mod stats;
mod svd;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use matrix::{axpy, dot, Matrix};
pub use mlp::{param_count, ForwardCache, Mlp};
pub use rng::{sample_normal, stream_id, Rng};
pub use svd::{lstsq, pinv, svd, svd_truncated, Svd};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NumericsError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite value in {context}")]
    NonFinite { context: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("no convergence after {iterations} iterations")]
    NoConvergence { iterations: usize },
}
