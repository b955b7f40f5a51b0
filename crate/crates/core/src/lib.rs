//! Kaczmarz row-action solvers for consistent linear systems `Ax = b`,
//! including the oblique-projection variants KO and RKO, together with
//! theory diagnostics, problem generators and a benchmark harness.

pub mod bench;
pub mod diagnostics;
pub mod error;
pub mod linalg;
pub mod problems;
pub mod solver;

pub use error::{Error, Result};
pub use linalg::RowMatrix;
pub use problems::Problem;
pub use solver::{iterate_stream, solve, Method, RunReport, SolverConfig, StopRule, Termination};
