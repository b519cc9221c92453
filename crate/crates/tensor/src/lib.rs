//! Minimal reverse-mode autodiff over dense f64 tensors.
//!
//! A [`Graph`] is a tape of immutable value nodes; every op records enough to
//! run its backward rule. Tapes are single-threaded; distinct tapes can live
//! on different threads because [`Tensor`] data is behind an `Arc`.

pub mod checkpoint;
pub mod gradcheck;
pub mod graph;
pub mod nn;
pub mod optim;
pub mod rng;
pub mod tensor;

pub use graph::{Grads, Graph, NodeId};
pub use tensor::{numel, Tensor, TensorError};
