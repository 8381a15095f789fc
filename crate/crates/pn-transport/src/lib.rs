//! Mixed even/odd-parity PN finite-element solver for the time-dependent
//! radiative transfer equation.
//!
//! The angular variable is discretized by a truncated real spherical-harmonics
//! expansion of odd order N, split into even and odd parity blocks; the spatial
//! variable by continuous piecewise-linear elements for the even block and
//! piecewise constants for the odd block on a 2D triangulation (the reduced
//! geometry of a z-invariant 3D slab). Time stepping is implicit Euler. The
//! discrete operator is never assembled globally: every apply is a sum of
//! (spatial matrix) · coefficients · (angular matrix)ᵀ tensor products, and
//! each linear solve eliminates the odd block exactly (it is diagonal per
//! triangle and mode) and runs preconditioned conjugate gradients on the
//! resulting symmetric positive definite even-block Schur complement.
//!
//! Modules:
//! - [`angular_basis`]: real spherical harmonics, parity bookkeeping, angular
//!   matrices (streaming, collision spectrum, half-range boundary), and the
//!   spherical quadrature rules used as oracles for all angular integrals.
//! - [`spatial_mesh`]: triangulations (structured unit-square generator and a
//!   plain-text import), element spaces, and all spatial element matrices.
//! - [`transport_operators`]: the global bilinear form B, its skew part S and
//!   dissipative part H, and the block mass operator, all matrix-free.
//! - [`linear_solvers`]: Schur-complement CG solvers for the stationary
//!   problem and for one implicit Euler step, plus a dense direct oracle.
//! - [`simulation`]: elliptic projection, the implicit Euler time loop, and
//!   energy/stability diagnostics.
//! - [`benchmark_harness`]: the manufactured-solution test problem, the three
//!   error measures, estimated orders of convergence, and the N/h/tau sweep
//!   studies.
//! - [`output`]: CSV and legacy VTK writers.
//! - [`verify`]: the self-check suite behind the CLI `verify` subcommand.

pub mod angular_basis;
pub mod benchmark_harness;
pub mod error;
pub mod linear_solvers;
pub mod output;
pub mod quadrature;
pub mod simulation;
pub mod spatial_mesh;
pub mod transport_operators;
pub mod verify;

pub use error::TransportError;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, TransportError>;
