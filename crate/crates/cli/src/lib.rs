//! Command-line front end: verification suites, training runs and reports.

pub mod config;
pub mod error;
pub mod metrics_log;
pub mod report;
pub mod train;
pub mod verify;

pub use error::{CliError, CliResult};
