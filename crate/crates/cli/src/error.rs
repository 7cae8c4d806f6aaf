use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot parse {path}: {message}")]
    ConfigParse { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Solver(#[from] infodesign::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Solver(_) => 1,
            Self::ConfigParse { .. } | Self::Config(_) => 2,
            Self::Io { .. } => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::ConfigParse { .. } => "config-parse",
            Self::Config(_) => "config",
            Self::Io { .. } => "file-io",
            Self::Solver(_) => "solver",
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    /// A core error raised while building the problem from the config.
    pub fn invalid(err: infodesign::Error) -> Self {
        Self::Config(err.to_string())
    }
}
