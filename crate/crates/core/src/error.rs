use thiserror::Error;

/// Errors raised anywhere in the analysis pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("resource error: {what} needs {needed} elements, budget is {budget}")]
    Resource { what: String, needed: usize, budget: usize },
    #[error("unsupported layer: {0}")]
    Capability(String),
    #[error("input lies on a linear-region boundary: {0}")]
    RegionBoundary(String),
    #[error("vector {index} is not unit norm (norm {norm})")]
    Normalization { index: usize, norm: f64 },
    #[error("training diverged at epoch {epoch}")]
    Training { epoch: usize },
    #[error("invalid argument: {0}")]
    Usage(String),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Problems with the model/tensor interchange files.
#[derive(Debug, Error)]
pub enum FormatError {
    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("corrupt blob: {0}")]
    CorruptBlob(String),
    #[error("invalid shape chain: {0}")]
    InvalidShapeChain(String),
    #[error("malformed manifest: {0}")]
    Manifest(String),
    #[error("malformed tensor file: {0}")]
    Tensor(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Process exit code used by the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 2,
            Error::Io { .. } => 3,
            Error::Dimension(_)
            | Error::Numeric(_)
            | Error::Resource { .. }
            | Error::Normalization { .. }
            | Error::Training { .. } => 4,
            Error::Format(_) | Error::Capability(_) => 5,
            Error::RegionBoundary(_) => 6,
        }
    }
}
