use std::path::PathBuf;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Malformed or inconsistent input data (bad counts, unknown sample IDs,
    /// dimension mismatches). Carries enough location context to fix the file.
    #[error("load error: {0}")]
    Load(String),

    /// Invalid run configuration (impossible sampler settings, degenerate
    /// designs, bad hyperparameters).
    #[error("config error: {0}")]
    Config(String),

    /// A model invariant was violated mid-run, or the sampler reached an
    /// inconsistent state.
    #[error("model error: {0}")]
    Model(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit category used by the CLI: 2 input, 3 config, 4 runtime.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Load(_) | Error::Io { .. } => 2,
            Error::Config(_) => 3,
            Error::Model(_) => 4,
        }
    }
}
