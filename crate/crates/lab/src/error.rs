use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("format error: {0}")]
    Format(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("missing input: {0}")]
    Missing(String),
    #[error(transparent)]
    Core(#[from] qcbnn_core::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("{failed} of {total} runs failed; see INCOMPLETE markers (first: {first})")]
    RunsFailed { failed: usize, total: usize, diverged: bool, first: String },
}

impl LabError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        LabError::Io { path: path.to_path_buf(), source }
    }

    /// Process exit status: 2 for configuration problems, 3 for a diverged
    /// run, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Config(_) | LabError::Core(qcbnn_core::Error::InvalidSpec(_)) => 2,
            LabError::Core(qcbnn_core::Error::Diverged { .. }) => 3,
            LabError::RunsFailed { diverged: true, .. } => 3,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
