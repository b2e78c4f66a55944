//! Sparse-grid stochastic collocation for weak approximation of SDE and SPDE
//! driven by white noise.
//!
//! The crate is organized bottom-up:
//!
//! * [`hermite`]: one-dimensional Gauss–Hermite rules for the standard normal.
//! * [`sparse_grid`]: Smolyak combination rules, full tensor rules, and
//!   deterministic integration over their nodes.
//! * [`sde`]: SDE models and the maps from driving variables to Euler and
//!   second-order weak scheme endpoints.
//! * [`weak`]: expectations of scheme endpoints by collocation, tensor rules
//!   or Monte Carlo, and the level-2 defect for the fourth moment.
//! * [`spectral`]: Fourier collocation, the stochastic Burgers solver and the
//!   trapezoidal propagator of the linear advection–diffusion SPDE.
//! * [`recursive`]: the recursive mean/second-moment algorithm for linear SPDE.
//! * [`experiment`]: configuration-driven runs, convergence orders and reports.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiment;
pub mod hermite;
pub mod recursive;
pub mod sde;
pub mod sparse_grid;
pub mod spectral;
pub mod sum;
pub mod weak;

pub use error::{Error, Result};
