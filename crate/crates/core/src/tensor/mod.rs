//! Dense matrices, a define-by-run autodiff tape, and a finite-difference
//! gradient oracle.

mod gradcheck;
mod matrix;
mod tape;

pub use gradcheck::{grad_check, relative_error, GradCheck, GradCheckReport, Stencil};
pub use matrix::Matrix;
pub(crate) use tape::sigmoid;
pub use tape::{Fault, Gradients, Tape, Var};
