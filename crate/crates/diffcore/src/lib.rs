//! Minimal reverse-mode automatic differentiation over 2-D `f64` tensors.
//!
//! The crate provides exactly what the truth-inference models need: a
//! tape ([`Graph`]) with broadcasting arithmetic, the activation and
//! normalization functions used by the encoders, a handful of structural
//! gather/segment ops, named parameters with JSON checkpoints, SGD and Adam.

mod error;
pub mod gradcheck;
mod graph;
pub mod optim;
mod params;
mod tensor;

pub use error::{DiffError, Result};
pub use graph::{logsumexp, sigmoid, softplus, softplus_inverse, Graph, Var};
pub use optim::{Adam, Optimizer, OptimizerKind, Sgd};
pub use params::{Checkpoint, CheckpointEntry, ParamId, ParamStore};
pub use tensor::{matmul, Tensor};
