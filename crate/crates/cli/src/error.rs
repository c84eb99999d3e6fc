use std::path::{Path, PathBuf};

use bkc_core::dusim::Fault;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{}: {message}", path.display())]
    Input { path: PathBuf, message: String },
    #[error("{0}")]
    Format(String),
    #[error("{overflow} occupied sequence(s) exceed the layout capacity of {capacity}; rerun with --cluster to substitute rare sequences")]
    Capacity { overflow: usize, capacity: usize },
    #[error("simulator fault {}{}: {fault}", fault.name(), fault.bit_offset().map(|b| format!(" at bit offset {b}")).unwrap_or_default())]
    Fault { fault: Fault },
    #[error("{0}")]
    Check(String),
}

impl CliError {
    pub fn input(path: &Path, message: impl ToString) -> Self {
        CliError::Input {
            path: path.to_path_buf(),
            message: message.to_string(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Fault { .. } => 3,
            CliError::Check(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
