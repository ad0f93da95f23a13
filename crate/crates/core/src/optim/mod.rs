//! Constrained nonlinear optimisation: a dual active-set QP and the SQP
//! method built on it.

pub mod linalg;
pub mod qp;
pub mod sqp;

pub use qp::{solve_qp, QpError, QpSolution};
pub use sqp::{minimize_constrained, Bounds, Problem, SqpError, SqpOptions, SqpResult};
