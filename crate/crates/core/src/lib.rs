//! Symmetric-function calculus on Garding cones, conformal boundary
//! identities on flat charts, and a continuation Newton solver for the
//! associated fully nonlinear Neumann problems.

// Index loops in the numerical kernels mirror the i/j index algebra of the
// symmetric-matrix and grid formulas they implement; iterator rewrites make
// those formulas harder to check against their derivations.
#![allow(clippy::needless_range_loop)]

pub mod conformal;
pub mod error;
pub mod grid;
pub mod solver;
pub mod symfun;
pub mod verify;

pub use error::{Error, Result};
