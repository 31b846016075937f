//! Command-line pipeline around the `maxcert` toolkit.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;

pub use commands::{run, Cli, Command};
pub use config::ExperimentConfig;
pub use error::{CliError, CliResult};
pub use report::{ReportRow, REPORT_HEADER};
