use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {msg}")]
    Parse { line: u64, msg: String },
    #[error("calendar alignment: {0}")]
    Alignment(String),
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error(transparent)]
    Core(#[from] cofactor_core::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl HarnessError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }

    pub(crate) fn parse(line: u64, msg: impl Into<String>) -> Self {
        Self::Parse { line, msg: msg.into() }
    }

    /// Process exit code for this error: 2 for bad input, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Io { .. } | Self::Json(_) => 1,
            Self::Csv(e) if e.is_io_error() => 1,
            Self::Core(cofactor_core::Error::Numerical(_)) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;

macro_rules! invalid {
    ($($arg:tt)*) => {
        return Err($crate::error::HarnessError::Validation(format!($($arg)*)))
    };
}
pub(crate) use invalid;
