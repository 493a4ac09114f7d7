//! Memory-frugal online logistic regression.
//!
//! This crate trains logistic models whose coefficients live on a coarse
//! fixed-point grid instead of in floats. Updates stay unbiased because
//! every write goes through randomized rounding, and per-coordinate
//! learning rates come from 8-bit probabilistic counters, so a trained
//! coordinate can cost 24 bits instead of 64 with nearly the same accuracy.
//! Trained models can be re-quantized even more aggressively for
//! prediction-only serving, with explicit bounds on the loss that costs.
//!
//! The pieces:
//!
//! - [`fixed_point`]: `Qn.m` grids, exact encode/decode, randomized rounding
//! - [`counting`]: 8-bit probabilistic counters with deviation thresholds
//! - [`logistic`]: stable sigmoid/log-loss and rounding-error bounds
//! - [`train`]: the online gradient descent loop over sparse binary data
//! - [`store`]: model serialization, prediction-time quantization, memory
//!   and entropy accounting
//! - [`data`]: sparse text format parsing and synthetic stream generation
//! - [`eval`]: progressive validation, AUC, regret measurement and bounds
//! - [`table`]: the packed coefficient table behind the fixed-point modes

pub mod counting;
pub mod data;
pub mod error;
pub mod eval;
pub mod fixed_point;
pub mod logistic;
pub mod rng;
pub mod store;
pub mod table;
pub mod train;

pub use error::{Error, Result};
