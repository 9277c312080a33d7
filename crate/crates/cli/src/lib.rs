//! Command-line front end and inference service for `tilesr-core`.

pub mod app;
pub mod config;
pub mod error;
pub mod server;
pub mod stream;

pub use error::{CliError, ExitKind};
