//! Energy-stable time stepping for the hydrodynamic Q-tensor model of nematic
//! liquid crystals.
//!
//! The scheme couples a scalar auxiliary variable for the bulk energy, a
//! linear stabilization term and a pressure-correction projection. Each step
//! solves one linear system for `(Q, r, u~)` with matrix-free GMRES and then
//! projects the velocity onto discretely divergence-free fields.

pub mod config;
pub mod diagnostics;
pub mod error;
pub mod field;
pub mod experiments;
pub mod grid;
pub mod io;
pub mod krylov;
pub mod ops;
pub mod poisson;
pub mod spectral;
pub mod stepper;
pub mod tensor;

pub use error::{Error, Result};
