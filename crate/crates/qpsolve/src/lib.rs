//! Solver and verifier for time-quasiperiodic natural Lagrangian systems on
//! Riemannian manifolds given in a single coordinate chart.

pub mod app;
pub mod conditions;
pub mod dichotomy;
pub mod error;
pub mod expr;
pub mod geometry;
pub mod jet;
pub mod ode;
pub mod problem;
pub mod report;
pub mod scalar;
pub mod solver;
pub mod torus;
pub mod verify;

pub use error::{Error, Result};
