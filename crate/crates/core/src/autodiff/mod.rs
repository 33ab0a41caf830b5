//! Minimal reverse-mode differentiation over dense `f64` matrices.

mod gradcheck;
mod tape;
mod tensor;

pub use gradcheck::{check_parameters, finite_difference_check, relative_error, ParamCheck};
pub use tape::{Activation, Gradients, Tape, Var};
pub use tensor::{layer_norm, matmul, softmax_rows, Tensor};
