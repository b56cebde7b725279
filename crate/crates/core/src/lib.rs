//! Semi-implicit, energy-stable finite volume scheme for the barotropic
//! Euler equations with Mach number scaling.
//!
//! The crate is `no_std` (it needs `alloc`). It contains the numerical core:
//!
//! * [`mesh`]: periodic uniform Cartesian mesh, dual-cell measures and the
//!   discrete averages, jumps, gradients and divergence.
//! * [`eos`]: the power-law pressure `p(rho) = rho^gamma` and its potentials.
//! * [`flux`]: stabilised, upwind-split mass and momentum fluxes.
//! * [`stepper`]: one time step (implicit density solve, explicit velocity
//!   update) with runtime enforcement of the stability conditions.
//! * [`diagnostics`]: energies, relative energies, error norms, EOC and the
//!   per-step energy balance audit.
//! * [`cases`]: the stationary vortex and well-prepared perturbation data.
//!
//! File formats, configuration and the command line live in the `apfv` crate.

#![no_std]
#![warn(missing_debug_implementations)]

extern crate alloc;
#[cfg(any(feature = "std", test))]
extern crate std;

pub mod cases;
pub mod diagnostics;
pub mod eos;
pub mod error;
pub mod field;
pub mod flux;
pub mod linalg;
mod math;
pub mod mesh;
pub mod stepper;

pub use error::{Error, Result};
pub use field::{CellField, CellVectorField, FaceField, FaceVectorField, Vec2};
pub use mesh::{Quadrature, StructuredMesh};

/// Spatial dimension of the scheme.
pub const DIM: usize = 2;
