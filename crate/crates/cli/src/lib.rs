//! Command-line front end: configuration, file formats, reports and plots.

pub mod config;
pub mod io;
pub mod run;
pub mod svg;

use std::path::Path;

/// Errors surfaced by the command-line tool, each with a stable code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] genvtest::Error),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{}line {line}: {msg}", file.as_deref().map(|f| format!("{f}: ")).unwrap_or_default())]
    Parse { file: Option<String>, line: usize, msg: String },
    #[error("configuration: {0}")]
    Config(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.display().to_string(), source }
    }

    pub fn parse(line: usize, msg: impl Into<String>) -> Self {
        CliError::Parse { file: None, line, msg: msg.into() }
    }

    pub(crate) fn in_file(self, path: &Path) -> Self {
        match self {
            CliError::Parse { line, msg, .. } => CliError::Parse { file: Some(path.display().to_string()), line, msg },
            other => other,
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.code(),
            CliError::Io { .. } => "io",
            CliError::Parse { .. } => "parse",
            CliError::Config(_) => "config",
        }
    }
}
