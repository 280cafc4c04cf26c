//! Spectral-Galerkin solver for the optimal control of 2D unsteady
//! second-grade fluids with free-slip boundary conditions on the square.
//!
//! The crate provides the divergence-free Stokes eigenbasis and its
//! transforms ([`spectral`]), the nonlinear couplings of the state,
//! linearized and adjoint equations ([`forms`]), time integration with
//! energy and transport diagnostics ([`state`]), linearized/adjoint solves
//! with duality and differentiability checks ([`sensitivity`]), a projected
//! gradient optimizer for the tracking functional ([`optimizer`]), and the
//! seeded verification batteries ([`verify`]).

pub mod config;
pub mod error;
pub mod forms;
pub mod optimizer;
pub mod randfield;
pub mod report;
pub mod sensitivity;
pub mod spectral;
pub mod state;
pub mod timeq;
pub mod verify;

pub use error::{EstimateViolation, OptimError, SolveError, SpectralError};
pub use spectral::{
    analyze_velocity, apply_sigma, build_basis, curl, curl_sigma, norms, synthesize_velocity,
    BasisTable, GridSpec, ModeIndex, ScalarSpectral, SigmaDir, SpectralField, Tables,
};
pub use state::{ControlTrajectory, Scheme, SolverConfig, Trajectory};
