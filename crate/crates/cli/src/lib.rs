//! Command-line front end: config and CSV handling, the subcommands, a
//! parallel path executor and the verification suite.

pub mod commands;
pub mod config;
pub mod csv_io;
pub mod error;
pub mod executor;
pub mod verify;

pub use config::{Overrides, RunConfig};
pub use error::{CliError, CliResult};
