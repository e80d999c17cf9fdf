//! Dense arrays, reverse-mode differentiation, Adam, and a finite-difference
//! gradient checker. All arithmetic is `f64`.

mod adam;
mod array;
mod gradcheck;
mod param;
mod tape;

pub use adam::AdamState;
pub use array::{sliding_dot, NdArray};
pub use gradcheck::{finite_diff_grad, max_relative_error};
pub use param::{ParamId, ParamSet, Parameter};
pub use tape::{Tape, Var};
