//! Library side of the `fieldloc` executable: configuration and the
//! subcommands, usable from tests without spawning processes.

pub mod commands;
pub mod config;
mod error;

pub use error::CliError;
