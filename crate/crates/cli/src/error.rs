use std::path::Path;

use nevlab::error::NevError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("config: {0}")]
    Toml(String),
    #[error("config: {0}")]
    Config(String),
    #[error("{key}: parse error at position {pos} in {src:?}: {msg}")]
    Expression { key: String, src: String, pos: usize, msg: String },
    #[error("{context}: {source}")]
    Engine { context: String, source: NevError },
    #[error("csv {path}: {msg}")]
    Csv { path: String, msg: String },
    #[error("plot: {0}")]
    Plot(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.display().to_string(), source }
    }

    pub fn engine(context: impl Into<String>, source: NevError) -> Self {
        Self::Engine { context: context.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
