//! Library half of the `plg` binary: argument definitions, data ingestion,
//! the `fit`, `diagnose` and `verify` commands and their JSON reports.

pub mod args;
pub mod commands;
mod error;
pub mod io;
pub mod reports;

pub use error::{CliError, Result};
pub use io::ingest_csv;
