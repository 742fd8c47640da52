//! Small reverse-mode differentiation engine over `f64` tensors.

mod check;
mod params;
mod tape;
mod tensor;

pub use check::{finite_diff_check_with, GRADIENT_FLOOR, MAX_PROBED_COORDS};
pub use params::{GradientSet, Owner, Parameter, ParameterStore};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
