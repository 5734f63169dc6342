//! Reverse-mode automatic differentiation over small dense matrices, plus the
//! MLP building blocks and optimizer used by every model in the zoo.

mod adam;
mod nn;
mod spectral;
mod tape;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use nn::{Activation, Bound, Linear, Mlp, ParamId, ParamStore};
pub use spectral::{power_iteration, spectral_norm};
pub use tape::{pairwise_sq_dist, Gradients, Tape, Var};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AdError {
    #[error("tensor of shape {shape:?} cannot hold {len} values")]
    InvalidShape { shape: [usize; 2], len: usize },
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: [usize; 2],
        rhs: [usize; 2],
    },
    #[error("{op}: {detail}")]
    Domain { op: &'static str, detail: String },
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("backward needs a 1x1 loss, got {0:?}")]
    NonScalar([usize; 2]),
}
