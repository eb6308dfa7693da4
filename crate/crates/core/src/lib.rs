// NaN-rejecting guards are written as negated comparisons
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod chain;
pub mod constants;
pub mod error;
pub mod grid;
pub mod lyapunov;
pub mod oracles;
pub mod scenario;
pub mod sim;
pub mod tridiag;

pub use error::{Error, Result};
