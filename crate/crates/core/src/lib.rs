//! Forecast reconciliation for multiple time series tied together by
//! arbitrary homogeneous linear constraints.

pub mod constraint;
pub mod covariance;
pub mod data;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod probabilistic;
pub mod reconcile;
pub mod scoring;
pub mod synth;

pub use error::{Error, Result};
