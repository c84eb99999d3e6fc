//! Library side of the `bkc` command-line tool.

pub mod args;
pub mod commands;
pub mod error;
pub mod inputs;
pub mod manifest;

pub use args::Cli;
pub use commands::{render, run, Outcome};
pub use error::CliError;
pub use manifest::RunManifest;
