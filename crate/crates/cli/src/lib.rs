//! Implementation of the `mareg` command-line tool.

pub mod commands;
pub mod config;
pub mod error;
pub mod outputs;

pub use config::{load_config, RunConfig};
pub use error::{CliError, CliResult};
