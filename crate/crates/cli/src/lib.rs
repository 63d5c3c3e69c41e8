//! Command-line driver and HTTP service for forward-backward models.

pub mod api;
pub mod commands;
pub mod config;
pub mod error;
pub mod wire;

pub use commands::{load_model, run, Cli};
pub use error::{CliError, CliResult};
