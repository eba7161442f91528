//! Command-line front end: CSV ingestion, reports and subcommands.

pub mod commands;
pub mod error;
pub mod files;
pub mod report;

pub use commands::{run, Cli};
pub use error::{CliError, CliResult};
