use std::path::PathBuf;

/// Failures of the file-backed pipeline and CLI.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] fsic_core::Error),
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
    #[error("config: {0}")]
    Config(String),
    #[error("fold {fold} (seed {seed}): {source}")]
    Fold {
        fold: usize,
        seed: u64,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 1 for invalid input, 2 for runtime or numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Core(e) if e.is_validation() => 1,
            Error::Core(_) | Error::Io { .. } => 2,
            Error::Parse { .. } | Error::Config(_) => 1,
            Error::Fold { source, .. } => source.exit_code(),
        }
    }

    pub(crate) fn in_fold(self, fold: usize, seed: u64) -> Self {
        Error::Fold {
            fold,
            seed,
            source: Box::new(self),
        }
    }
}
