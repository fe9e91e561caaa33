//! Monotone mean-variance portfolio game under a stochastic short rate.
//!
//! Closed-form Vasicek saddle point, finite-difference solution of the
//! reduced PDE chain, Monte Carlo simulation under `P` and `Q^η`, and
//! simulation-based checks of the saddle-point claims.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod closed_form;
pub mod config;
pub mod error;
pub mod game;
pub mod market;
pub mod pde;
pub mod quadrature;
pub mod runner;
pub mod sim;
pub mod surface;

pub use error::{Error, Result};
