use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] hgnn_core::Error),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{}:{line}: expected {expected} fields, found {found}", path.display())]
    Ragged {
        path: PathBuf,
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("manifest {}: {message}", path.display())]
    Manifest { path: PathBuf, message: String },
    #[error("{}: sha256 {actual} does not match manifest ({expected})", path.display())]
    HashMismatch {
        path: PathBuf,
        expected: String,
        actual: String,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    /// Process exit status: 2 for configuration problems, 3 for data
    /// problems, 4 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        use hgnn_core::Error as E;
        match self {
            Error::Config(_) => 2,
            Error::Core(E::Config(_)) => 2,
            Error::Core(E::NumericalDivergence { .. } | E::AllTrialsDiverged(_)) => 4,
            Error::Core(_) => 3,
            Error::Io { .. }
            | Error::Parse { .. }
            | Error::Ragged { .. }
            | Error::Manifest { .. }
            | Error::HashMismatch { .. }
            | Error::Json(_) => 3,
        }
    }
}
