//! Steady-state multi-group discrete-ordinates neutron transport on structured
//! grids, written as a sequence of stencil (convolution) operations.
//!
//! The crate is organised bottom-up:
//!
//! - [`quadrature`]: octahedral discrete-ordinates sets and their angular coarsening.
//! - [`filters`]: ConvFEM advection, stiffness and mass stencils, upwind stencils
//!   and the mixed-mass operator.
//! - [`grid`]: padded 4D field storage (space × direction × group), the stencil
//!   engine, vacuum halo handling and the scalar flux.
//! - [`transport`]: upwind and Petrov-Galerkin residuals, anisotropic
//!   residual-based diffusivities and Jacobi diagonals.
//! - [`multigrid`]: space-angle hierarchy, restriction, prolongation, Jacobi
//!   smoothing and the sawtooth cycle.
//! - [`eigen`]: group sources, fixed-source solves and power iteration for k_eff.
//! - [`problems`]: the straight-duct and fuel-assembly benchmarks and the
//!   cross-section file format.
//! - [`export`]: CSV/VTK writers for fields, profiles, metrics and manifests.
//! - [`oracle`]: dense-matrix reference implementations used for verification.

pub mod eigen;
pub mod error;
pub mod export;
pub mod filters;
pub mod grid;
pub mod multigrid;
pub mod oracle;
pub mod problems;
pub mod quadrature;
pub mod transport;

mod gauss;

pub use error::{Error, Result};
