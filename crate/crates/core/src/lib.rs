//! Adaptive stochastic Galerkin finite elements for the lognormal diffusion
//! problem, with a residual error estimator and Monte Carlo validation.

pub mod adapt;
pub mod chaos;
pub mod cli;
pub mod config;
pub mod error;
pub mod estimator;
pub mod fem;
pub mod field;
pub mod galerkin;
pub mod mesh;
pub mod quadrature;
pub mod sparse;
pub mod validate;

pub use error::{Error, Result};
