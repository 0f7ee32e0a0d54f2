//! Graph-to-graph learning.
//!
//! Graphs are written as sequences of adjacency vectors under a canonical
//! depth-first node order, encoded by a recurrent network that runs over the
//! entries of each vector and then across vectors, and decoded
//! autoregressively into per-edge probabilities.

pub mod autodiff;
pub mod canon;
pub mod data;
mod error;
pub mod graph;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod train;

pub use error::{Error, Result};
pub use graph::{AdjVecSeq, Graph};
