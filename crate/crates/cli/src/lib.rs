//! Reproducible pipeline around `blood-core`: every artifact follows from
//! the run config and the seed.

pub mod commands;
pub mod config;
pub mod error;
pub mod layout;
pub mod manifest;

pub use config::RunConfig;
pub use error::{CliError, Result};
