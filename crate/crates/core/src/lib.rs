//! Optimal as-you-go relay placement along a random lattice path.

pub mod advisor;
#[cfg(feature = "service")]
pub mod cli;
pub mod constrained;
pub mod error;
pub mod heuristic;
pub mod mdp;
pub mod model;
pub mod osla;
pub mod placement;
pub mod renewal;
#[cfg(feature = "service")]
pub mod service;
pub mod sim;
pub mod verify;

pub use error::{Error, Result};
