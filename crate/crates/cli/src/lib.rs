//! Config-driven experiment runner on top of `drift-core`.
//!
//! Every command writes its artifacts plus a `manifest.json` listing them
//! with SHA-256 checksums, so two runs of the same config can be compared
//! file by file.

use std::path::Path;

pub mod config;
pub mod io;
pub mod pipeline;

pub use config::ExperimentConfig;
pub use io::{RunManifest, RunStatus};

#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("stage {stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: drift_core::Error,
    },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("output error: {0}")]
    Output(String),
}

impl LabError {
    pub(crate) fn io(path: &Path, e: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }

    /// Process exit code: 3 for configuration errors, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 3,
            _ => 1,
        }
    }
}
