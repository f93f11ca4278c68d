//! Wavelet-enhanced CNN+LSTM autoencoder for multivariate time-series
//! anomaly detection.
//!
//! The pipeline: [`wavelet`] decomposes each fragment into per-scale detail
//! coefficients, [`model`] encodes the raw signal and every detail level
//! into a global code and reconstructs them, [`training`] fits the model in
//! semi-supervised or supervised mode, and [`streaming`] turns fragment
//! predictions into per-block verdicts by sliding-window voting.

pub mod cli;
pub mod data;
pub mod error;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod streaming;
pub mod training;
pub mod wavelet;

pub use error::{Error, Result};
