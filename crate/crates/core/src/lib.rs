//! Numerical core for the stochastic planetary geostrophic heat model.
//!
//! Temperature lives on a node-based tensor grid over `[0, lx] x [0, ly] x [-h, 0]`.
//! Velocity and surface pressure are diagnosed from temperature at every step.

pub mod action;
pub mod axis;
pub mod constants;
pub mod error;
pub mod grid;
mod krylov;
mod lbfgs;
pub mod montecarlo;
pub mod noise;
pub mod operators;
pub mod params;
pub mod paths;
pub mod presets;
pub mod separable;
pub mod skeleton;
pub mod stepper;
pub mod velocity;

pub use error::{Error, Result};
pub use grid::{Grid, HVectorField, ScalarField, SurfaceField};
pub use params::{ForcingSet, HeatSource, PhysParams, WindStress};
