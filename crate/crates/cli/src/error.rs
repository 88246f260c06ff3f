use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("missing artifact {}: run `blood {producer}` first", path.display())]
    MissingArtifact { path: PathBuf, producer: &'static str },

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    #[error(transparent)]
    Core(#[from] blood_core::Error),
}

impl CliError {
    /// 2 config error, 3 missing artifact, 4 numerical failure, 1 anything
    /// else (I/O, corrupt files).
    pub fn exit_code(&self) -> i32 {
        use blood_core::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Core(E::InvalidArgument(_) | E::LayerIndex { .. } | E::OracleCap { .. }) => 2,
            CliError::MissingArtifact { .. } => 3,
            CliError::Core(E::Numerical(_)) => 4,
            _ => 1,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}
