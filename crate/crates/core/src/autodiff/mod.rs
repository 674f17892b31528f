//! Reverse-mode automatic differentiation over [`Tensor`](crate::Tensor)s.
//!
//! A [`Graph`] is rebuilt for every forward pass. Each primitive records its
//! inputs and output value; [`Graph::backward`] walks the tape in reverse.

mod check;
mod graph;
mod optim;

pub use check::{finite_diff_grad, max_relative_error, relative_error};
pub use graph::{softmax_tensor, Gradients, Graph, OpTag, Var};
pub use optim::{adam_step, clip_global_norm, AdamConfig, AdamState};

#[cfg(test)]
mod tests;
