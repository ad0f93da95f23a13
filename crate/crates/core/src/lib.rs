//! Core library: objective language, differentiable terms, flow model,
//! solvers, closed-loop control and the agent front end.

pub mod agent;
pub mod control;
pub mod dsl;
pub mod flow;
pub mod geom;
pub mod inverse;
pub mod optim;
pub mod potential;
pub mod terms;

pub use geom::{Rect, Vec2};
