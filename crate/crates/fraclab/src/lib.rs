//! Numerical laboratory for Dirichlet forms, effective resistance and heat
//! kernels on graph approximations of fractal spaces.

pub mod dirichlet;
pub mod error;
pub mod graph;
pub mod heat;
pub mod linalg;
pub mod resistance;
pub mod runner;
pub mod scaling;
pub mod verify;

pub use error::{Error, Result};
