//! Command-line driver: configuration loading, subcommands, and result files.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

pub use commands::{run, Cli};
pub use error::CliError;
