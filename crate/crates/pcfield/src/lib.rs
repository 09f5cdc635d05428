//! File formats and batch commands around `pcfield-core`.
//!
//! A problem file (JSON, see [`schema`]) lists the harmonic channels of a
//! field with their signal and noise densities and the functional to be
//! estimated. [`commands::run`] validates it and returns the artifacts of a
//! command in memory; [`output::write_all`] puts them on disk. Every artifact
//! carries the SHA-256 of the input file and the effective tolerances.

pub mod commands;
pub mod error;
pub mod model;
pub mod output;
pub mod schema;

pub use commands::{run, Command, Outcome, RunOptions, Status};
pub use error::CliError;
