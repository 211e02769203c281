//! Reproducible experiments on hard GP bandit instances on the sphere:
//! JSON configurations in, CSV and JSON outputs plus a hashed manifest out.

pub mod checks;
pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;

pub use commands::{run, Subcommand};
pub use error::CliError;
