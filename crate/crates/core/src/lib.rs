// `!(a > b)` comparisons are deliberate: they reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiments;
pub mod flow;
pub mod lasso;
pub mod lcp;
pub mod linalg;
pub mod oracles;
pub mod output;
pub mod problem;

pub use error::{Error, Result};
pub use lcp::{solve_lcp, trace_parametric_path, verify_path, LcpSolution, PiecewisePath};
pub use problem::{random_instance, QuadraticProblem};
