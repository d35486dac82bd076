use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {message}")]
    Config { path: String, message: String },
    #[error("cannot parse configuration: {0}")]
    Parse(String),
    #[error("{0}")]
    Core(#[from] scivr_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot compare runs: {0}")]
    Compare(String),
    #[error("bad spectrum file {path}: {message}")]
    Format { path: String, message: String },
}

impl Error {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// Process exit code for the CLI: 2 for anything the user can fix in
    /// the inputs, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::Parse(_) | Error::Compare(_) | Error::Format { .. } => 2,
            Error::Core(
                scivr_core::Error::InvalidParameter(_)
                | scivr_core::Error::DimensionMismatch { .. },
            ) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
