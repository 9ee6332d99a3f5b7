//! File formats, configuration and subcommand drivers for `physprobe-core`.
//!
//! Each subcommand writes into one output directory holding the resolved
//! config (`config.json`), the seed and build version (`run.json`) and its
//! CSV/NDJSON artifacts. See the README for column schemas.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod output;

pub use config::{EnvSpec, EvalConfig, RunConfig};

/// Crate version plus `git describe` of the build tree when available.
pub const VERSION: &str = env!("PHYSPROBE_VERSION");

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("checkpoint does not fit the environment: {0}")]
    ShapeMismatch(String),
    #[error(transparent)]
    Env(#[from] physprobe_core::envproto::EnvError),
    #[error(transparent)]
    Train(#[from] physprobe_core::trainer::TrainError),
    #[error(transparent)]
    Eval(#[from] physprobe_core::evalkit::EvalError),
}

impl Error {
    /// Stable machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Io(_) => "io",
            Error::Checkpoint(_) => "checkpoint",
            Error::ShapeMismatch(_) => "shape_mismatch",
            Error::Env(_) => "env",
            Error::Train(_) => "train",
            Error::Eval(_) => "eval",
        }
    }

    /// One-line JSON error report.
    pub fn json_line(&self) -> String {
        serde_json::json!({ "error": { "kind": self.kind(), "message": self.to_string() } }).to_string()
    }
}
