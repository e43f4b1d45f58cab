use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("missing input file {}", .0.display())]
    MissingInput(PathBuf),

    #[error("missing upstream artifacts (run the earlier stage first): {}", .0.join(", "))]
    MissingDependency(Vec<String>),

    #[error(transparent)]
    Core(#[from] xmarket::Error),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    /// Process exit status for this error class.
    pub fn exit_code(&self) -> i32 {
        use xmarket::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::MissingInput(_) => 3,
            CliError::MissingDependency(_) => 4,
            CliError::Core(E::Io { source, .. }) if source.kind() == std::io::ErrorKind::NotFound => 3,
            CliError::Core(
                E::Parse { .. } | E::Slate { .. } | E::Market(_) | E::UserOverlap { .. } | E::Decode(_),
            ) => 5,
            CliError::Core(E::InvalidParam(_)) => 2,
            _ => 1,
        }
    }
}
