//! Potential kernel, conditioned random walk and verification tooling for
//! the planar simple random walk conditioned never to hit the origin.

pub mod closed_forms;
pub mod error;
pub mod experiments;
pub mod exact_solver;
pub mod kernel;
pub mod lattice;
pub mod monte_carlo;
pub mod potential_theory;

pub use error::{Error, Result};
