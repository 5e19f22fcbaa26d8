//! Windowed forecasting of cumulative case-count time series.
//!
//! The pipeline: ingest country series from the JHU CSV layout
//! ([`ingest`]), move to the log domain and slice sliding windows
//! ([`series`]), fit either a local cubic polynomial or an extreme
//! learning machine with a ridge output layer ([`models`], [`linalg`]),
//! pick hyperparameters by rolling-origin cross-validation ([`tuning`]),
//! and evaluate with rolling backtests and percentage errors
//! ([`backtest`]).
//!
//! All fitting and prediction happen on `ln(count)`; exponentiation back
//! to counts happens once, when a forecast is reported. Every random
//! choice flows from an explicit `u64` seed, so runs replay exactly.

pub mod backtest;
pub mod ingest;
pub mod linalg;
pub mod models;
pub mod rng;
pub mod series;
pub mod tuning;

mod error;

pub use error::{Error, Result};
