//! Minimal-order linear system identification from finite input/output rollouts.
//!
//! Given `N` independent trajectories of a discrete-time linear system
//!
//! ```text
//! x[t+1] = A x[t] + B u[t],   x[1] = 0,
//! y[t]   = C x[t] + D u[t] + noise,
//! ```
//!
//! this crate estimates a state-space model of the smallest order that explains
//! the data. Three estimators are provided, all driven by the same rollout data:
//!
//! * **`nuc`** — Hankel nuclear-norm minimization solved by accelerated proximal
//!   gradient descent with singular-value thresholding ([`solvers::nuc_solve`]).
//! * **`bm`** — Burer–Monteiro factorization of the Hankel matrix with Polyak
//!   momentum, a global-optimality polar certificate, and rank augmentation
//!   ([`solvers::bm_solve`]).
//! * **`sp`** — direct optimization over diagonal system parameters (poles and
//!   input/output vectors) under an atomic-norm style regularizer, with a
//!   golden-section polar search ([`solvers::sp_solve`]).
//!
//! Supporting machinery: Hankel operator algebra ([`linops`]), rollout
//! simulation and synthetic data generation ([`system`]), Ho-Kalman realization
//! ([`realization`]), optimality certificates ([`certificates`]), evaluation
//! metrics ([`metrics`]), brute-force reference implementations for testing
//! ([`oracle`]), and an experiment harness with a thin CLI ([`harness`]).
//!
//! The `examples/` directory contains one runnable example per capability; the
//! `minreal` binary exposes the experiment harness as `gen`, `fit`, `sweep`,
//! and `spectrum` subcommands.

pub mod certificates;
pub mod error;
mod ioutil;
pub mod linops;
pub mod metrics;
pub mod numeric;
pub mod oracle;
pub mod realization;
pub mod solvers;
pub mod system;

pub mod harness;

pub use error::{Error, Result};
