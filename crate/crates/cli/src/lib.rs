//! Command-line experiments for wrapped GPLVMs: fitting, reconstruction
//! error, predictive calibration, latent export and synthetic data.

pub mod commands;
pub mod config;
pub mod experiment;
pub mod output;
pub mod synth;

use serde::Serialize;
use wgplvm::ErrorCategory;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] wgplvm::Error),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Machine-readable error printed to stderr on failure.
#[derive(Debug, Serialize)]
pub struct ErrorRecord {
    pub error: &'static str,
    pub exit_code: i32,
    pub message: String,
}

impl CliError {
    pub fn category(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Io { .. } => "data",
            CliError::Core(e) => match e.category() {
                ErrorCategory::Config => "config",
                ErrorCategory::Data => "data",
                ErrorCategory::Numerical => "numerical",
            },
        }
    }

    /// 2 configuration, 3 data, 4 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self.category() {
            "config" => 2,
            "data" => 3,
            _ => 4,
        }
    }

    pub fn record(&self) -> ErrorRecord {
        ErrorRecord {
            error: self.category(),
            exit_code: self.exit_code(),
            message: self.to_string(),
        }
    }
}
