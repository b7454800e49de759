//! File formats, command-line entry points and the HTTP service around
//! `skinspec-core`.

pub mod commands;
pub mod config;
pub mod error;
pub mod server;
pub mod session;

pub use error::{CliError, CliResult};
