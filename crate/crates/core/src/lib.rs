//! Pivotal (self-normalized) inference for the slope of functional linear
//! regression with dependent data.
//!
//! The pipeline: curves on a uniform grid ([`funcspace`]) → eigen-system of
//! the empirical covariance and roughness penalty ([`eigensys`]) → sequential
//! ridge fits over sample fractions ([`estimator`]) → self-normalized
//! statistics and decisions ([`inference`]) calibrated by simulated quantiles
//! of the pivotal limit ([`pivotal`]). [`simharness`] generates synthetic
//! designs and runs Monte-Carlo experiments.

pub mod eigensys;
pub mod error;
pub mod estimator;
pub mod funcspace;
pub mod inference;
pub mod pivotal;
pub mod simharness;

pub use error::{Error, Result};
