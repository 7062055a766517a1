//! Dense matrices, reverse-mode differentiation, parameters and Adam.

mod gradcheck;
mod graph;
mod matrix;
mod params;

pub use gradcheck::{finite_difference_check, gradient_error, GradCheckReport, ParamCheck, SMALL_GRADIENT};
pub use graph::{sigmoid, ComputeNode, Graph, NodeId};
pub use matrix::DenseMatrix;
pub use params::{AdamConfig, ParameterStore, CHECKPOINT_MAGIC};
