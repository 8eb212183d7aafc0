//! Threaded runtime around `mtsph-core`: the multi-worker task executor, the
//! simulated multi-rank driver, scenario generation, snapshot and metrics
//! I/O, an exact Riemann solver for validation, and scheme/decomposition
//! comparisons used by the CLI.

pub mod compare;
pub mod config;
pub mod error;
pub mod exec;
pub mod metrics;
pub mod riemann;
pub mod scenario;
pub mod sim;
pub mod snapshot;
pub mod store;
pub mod validate;

pub use error::{Error, Result};
