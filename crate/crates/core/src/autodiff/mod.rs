//! Dense `f64` tensors with tape-based reverse-mode differentiation.
//!
//! Every network in the crate is a composition of the primitives on
//! [`Tape`]. A tape is built fresh for each forward pass, since the number of
//! recurrent steps depends on the graph, and supports one backward pass.
//!
//! ```
//! use graph2graph::autodiff::{Tape, Tensor};
//!
//! let mut tape = Tape::new();
//! let x = tape.param(Tensor::scalar(3.0));
//! let y = tape.mul(x, x)?;
//! tape.backward(y)?;
//! assert_eq!(tape.grad(x).unwrap().item(), 6.0);
//! # Ok::<(), graph2graph::Error>(())
//! ```

mod gradcheck;
mod tape;
mod tensor;

pub use gradcheck::grad_check;
pub use tape::{Tape, Var, LOG_FLOOR};
pub use tensor::Tensor;
