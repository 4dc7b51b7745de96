//! Numerical laboratory for Green functions of `-div(A grad)` with periodic
//! coefficients: Q1 discretisation on growing Dirichlet boxes, Krylov solves,
//! and measurement tools for decay rates and weak-Lebesgue norms.

pub mod analysis;
pub mod coeff;
pub mod config;
pub mod error;
pub mod experiments;
pub mod green;
pub mod lift;
pub mod mesh;
pub mod report;
pub mod sparse;

pub use error::{Error, Result};
