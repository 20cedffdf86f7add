//! Minimal dense-array math with reverse-mode differentiation.
//!
//! Arrays are 64-bit, row-major, rank 1 or 2; batching is always the leading
//! dimension. Differentiable computations are recorded on a [`Graph`] tape
//! whose nodes reference earlier nodes, so reverse creation order is a valid
//! reverse topological order for [`Graph::backward`]. Trainable weights live
//! in a [`ParameterSet`] outside any single tape and receive gradients via
//! [`Graph::scatter_grads`].

mod array;
mod graph;
mod optim;

pub use array::DenseArray;
pub use graph::{Graph, NodeId};
pub use optim::{sgd_step, Optimizer, OptimizerKind, Param, ParameterSet, RmsProp};
