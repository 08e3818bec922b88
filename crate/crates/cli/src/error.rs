use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("holdout PSNR {psnr:.2} dB is below the floor of {floor:.2} dB")]
    QualityFloor { psnr: f64, floor: f64 },
    #[error("{failed} of {total} frames failed to localize")]
    LocalizationFailed { failed: usize, total: usize },
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            message: err.to_string(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io { .. } => 3,
            CliError::QualityFloor { .. } => 4,
            CliError::LocalizationFailed { .. } => 5,
        }
    }
}
