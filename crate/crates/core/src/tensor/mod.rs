//! Dense `f64` tensors and a tape-based reverse-mode differentiator.

mod dense;
mod gradcheck;
mod tape;

pub use dense::Tensor;
pub use gradcheck::{finite_diff_check, finite_diff_check_params, GradCheckReport};
pub use tape::{Activation, Reduction, Tape, Var};
