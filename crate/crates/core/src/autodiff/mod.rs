//! Dense `f64` tensors and tape-based reverse-mode differentiation.

mod gradcheck;
mod params;
mod tape;
mod tensor;

pub use gradcheck::{finite_diff_grad, max_relative_error, relative_error};
pub use params::{ParamId, ParamStore, Parameter};
pub use tape::{softmax_in_place, Gradients, Tape, Var};
pub use tensor::Tensor;
