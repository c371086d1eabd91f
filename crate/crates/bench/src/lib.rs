//! Synthetic recovery experiments for the `gmemi-core` models: signal and
//! measurement generators, trial sweeps with CSV output, and penalty curves.

pub mod config;
pub mod curve;
pub mod error;
pub mod measurements;
pub mod models;
pub mod signals;
pub mod sweep;

pub use error::{BenchError, Result};
