//! Dense tensors, reverse-mode differentiation and gradient checking.

mod gradcheck;
mod graph;
pub mod kernels;
mod params;
mod tensor;

pub use gradcheck::{grad_check, GradCheckOptions, GradCheckReport, ParamReport};
pub use graph::{Activation, Fault, Graph, NodeId};
pub use params::{Gradients, ParamId, ParamStore};
pub use tensor::{lit, Real, Tensor};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("index {index} out of range 0..{bound}")]
    Index { index: usize, bound: usize },
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("weight normalization: column {0} of the direction matrix has zero norm")]
    DegenerateDirection(usize),
    #[error("duplicate parameter name '{0}'")]
    DuplicateParam(String),
    #[error("unknown parameter '{0}'")]
    UnknownParam(String),
}

pub type Result<T, E = NumericsError> = std::result::Result<T, E>;
