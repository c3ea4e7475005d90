//! Dense `f64` tensors with tape-based reverse-mode differentiation.
//!
//! Every forward operation is appended to a [`Tape`]; [`Tape::backward`]
//! walks the tape in reverse and accumulates gradients into each leaf that
//! asked for one. Values used more than once accumulate additively.
//!
//! ```
//! use tbsm::autodiff::{Tape, Tensor};
//!
//! let mut tape = Tape::new();
//! let x = tape.leaf(Tensor::vector(vec![1.0, -2.0]).with_grad());
//! let sq = tape.mul(x, x)?;
//! let loss = tape.sum(sq);
//! let grads = tape.backward(loss)?;
//! assert_eq!(grads.get(x).unwrap().data(), &[2.0, -4.0]);
//! # Ok::<(), tbsm::Error>(())
//! ```

mod gradcheck;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, numeric_gradient, relative_error, GradCheckReport, DEFAULT_STEP};
pub use tape::{Function, Gradients, Tape, Var, NORM_EPS};
pub use tensor::Tensor;
