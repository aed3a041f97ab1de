//! Dense matrices and reverse-mode automatic differentiation.

mod graph;
mod matrix;
pub(crate) mod tape;

pub use graph::{Eager, Graph};
pub use matrix::Matrix;
pub use tape::{Tape, Var};
