//! Bayesian changepoint detection on airway area-change profiles.
//!
//! The pipeline resamples baseline and follow-up area profiles to a 1 mm
//! grid, registers them, and runs a reversible-jump Metropolis-Hastings
//! sampler with Student-t segments on the log-difference series. The
//! pooled changepoint posterior is reduced to a single dilatation point.
//! Two conventional detectors, a logistic dilatation simulator and
//! region volume metrics complete the evaluation tooling.

// NaN must fail the domain checks, so `!(x > 0.0)` is deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod cli;
pub mod error;
pub mod io;
pub mod posterior;
pub mod sampler;
pub mod segment_model;
pub mod series_prep;
pub mod simulation;
pub mod volume;

pub use error::{Error, Result};
