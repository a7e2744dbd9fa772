//! Numerical lab for the compressible simplified Ericksen-Leslie system with
//! density-dependent viscosity on a periodic box.
//!
//! Layers, bottom up: [`grid`] and [`field`] storage with [`calculus`]
//! (pseudo-spectral or finite-difference derivatives), the [`model`]
//! right-hand side, [`integrator`] (RK4 with director projection, monitored
//! runs, checkpoints), [`diagnostics`], and the [`experiments`] harness.
//! [`config`], [`manifest`] and [`checks`] back the command-line driver.

pub mod calculus;
pub mod checks;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod experiments;
pub mod fft;
pub mod field;
pub mod grid;
pub mod integrator;
pub mod manifest;
pub mod model;
pub mod norms;
pub mod random;
pub mod snapshot;

pub use calculus::Calculus;
pub use config::{RunConfig, SweepSpec};
pub use diagnostics::{BootstrapReport, Readings, RunRecord};
pub use error::FieldError;
pub use field::{DirectorField, ScalarField, TensorField, VectorField};
pub use grid::{CalculusMode, Grid};
pub use integrator::{InitSpec, Projection, RunOutcome, SolverConfig};
pub use model::{PhysParams, State};
