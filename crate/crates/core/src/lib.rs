//! Numerical laboratory for the incompressible porous media (IPM) equation
//! near the stable stratification `ρ = -x2`.
//!
//! The crate provides a pseudospectral discretization of the Riesz-transform
//! velocity, a real-space singular-integral oracle, closed-form constructions
//! of layered initial data, the exactly solvable hyperbolic model flow,
//! RK4 evolution of the stable, forced and coupled systems, and drivers that
//! measure the scaling laws of the construction.

pub mod error;
pub mod evolution;
pub mod experiments;
pub mod grid;
pub mod io;
pub mod kernel_quad;
pub mod model_flow;
pub mod profiles;
pub mod quad;
pub mod spectral;

pub use error::{LabError, Result};
pub use grid::{make_grid, GridSpec, ScalarField};
pub use spectral::{SpectralField, VelocityField};
