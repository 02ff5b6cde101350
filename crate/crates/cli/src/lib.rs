//! Library side of the `loophole-lab` command-line tool: config parsing,
//! output conventions and the subcommands themselves.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

pub use error::{CliError, CliResult, EXIT_CONFIG, EXIT_INTERNAL};
