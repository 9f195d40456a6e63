//! Dense `f64` tensors, a define-by-run reverse-mode tape, and a
//! finite-difference gradient checker.
//!
//! ```
//! use tbm_autodiff::{Tape, Tensor};
//!
//! let mut tape = Tape::new();
//! let x = tape.variable(Tensor::vector(vec![0.0]));
//! let y = tape.sigmoid(x);
//! let loss = tape.sum(y);
//! tape.backward(loss).unwrap();
//! assert_eq!(tape.grad(x).unwrap(), &[0.25]);
//! ```

mod error;
pub mod gradcheck;
mod lstm;
mod tape;
mod tensor;

pub use error::TensorError;
pub use gradcheck::{analytic_gradients, compare_gradients, grad_check, GradCheckReport, FD_STEP};
pub use lstm::{LstmState, LstmWeights};
pub use tape::{logistic, softmax_values, Binary, Tape, Unary, Var};
pub use tensor::Tensor;

pub type Result<T> = std::result::Result<T, TensorError>;
