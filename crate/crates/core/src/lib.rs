//! Bayesian optimization with Gaussian processes that also condition on the
//! signs of directional derivatives, used to carry hints from cheap small-data
//! tuning runs over to the full-data run.
// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acquisition;
pub mod cli;
pub mod engine;
pub mod ep;
pub mod error;
pub mod kernel;
pub mod normal;
pub mod objectives;
pub mod observation;
pub mod space;

pub use error::{Error, Result};
