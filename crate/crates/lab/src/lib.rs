//! Experiment driver around `landscape-core`: fixture files, configuration,
//! deterministic runs and JSON/CSV reports.

use std::path::Path;

pub mod config;
pub mod fixture;
pub mod report;
pub mod run;

pub use config::{ExperimentConfig, Format, Scope};
pub use report::{RunReport, SCHEMA_VERSION};

#[derive(Debug)]
pub enum LabError {
    Config { field: String, message: String },
    Fixture(String),
    Io { path: String, message: String },
    Core(landscape_core::Error),
    Json(String),
}

impl LabError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        LabError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }
}

impl std::fmt::Display for LabError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LabError::Config { field, message } => write!(f, "invalid config field `{field}`: {message}"),
            LabError::Fixture(m) => write!(f, "fixture: {m}"),
            LabError::Io { path, message } => write!(f, "{path}: {message}"),
            LabError::Core(e) => write!(f, "{e}"),
            LabError::Json(m) => write!(f, "json: {m}"),
        }
    }
}

impl std::error::Error for LabError {}

impl From<landscape_core::Error> for LabError {
    fn from(e: landscape_core::Error) -> Self {
        LabError::Core(e)
    }
}
