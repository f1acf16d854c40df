//! Command implementations behind the `so3krates` binary: dataset
//! generation, training, evaluation, verification and diagnostics dumps.
//!
//! Every command returns a [`CliError`] whose [`CliError::exit_code`] the
//! binary passes to the shell.

pub mod commands;
mod config;
mod error;

pub use config::RunConfig;
pub use error::CliError;
