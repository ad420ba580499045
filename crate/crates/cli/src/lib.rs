//! Pipeline driver and HTTP service around the `plotsieve` library.

pub mod commands;
pub mod error;
pub mod http;
pub mod report;
pub mod service;

pub use error::{CliError, Result};
