//! HAR-family realized covariance forecasting.
//!
//! Univariate HAR, log HAR, quarticity-corrected and state-space variance
//! models are combined with a scalar correlation HAR through the DRD
//! decomposition `S = D R D`, next to multivariate vech HAR models. The
//! [`backtest`] module runs them in a rolling window and evaluates the
//! forecasts with Frobenius and Q-Like losses, Diebold-Mariano tests, model
//! confidence sets and minimum-variance portfolios.
//!
//! Units: daily returns in percent, variances in percent², quarticities in
//! percent⁴.

// `!(x > 0.0)` is used on purpose so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod backtest;
pub mod cli;
pub mod econ;
pub mod error;
pub mod io;
pub mod kv;
pub mod linalg;
pub mod measures;
pub mod mvmodels;
pub mod optim;
pub mod rng;
pub mod statespace;
pub mod statloss;
pub mod synth;
pub mod unihar;

pub use error::{Error, Result};
