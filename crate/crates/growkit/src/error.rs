use std::io;
use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Why a checkpoint file could not be read.
#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum CheckpointError {
    #[error("not a checkpoint (bad magic bytes)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("file ends inside the {0}")]
    TruncatedHeader(&'static str),
    #[error("payload holds {actual} bytes but the header declares {declared}")]
    TruncatedPayload { declared: u64, actual: u64 },
    #[error("tensor {name} spans bytes {start}..{end} outside the {payload}-byte payload")]
    OutOfBounds { name: String, start: u64, end: u64, payload: u64 },
    #[error("tensors {first} and {second} overlap")]
    Overlap { first: String, second: String },
    #[error("tensor {0} is not aligned to 64 bytes")]
    Misaligned(String),
    #[error("malformed header: {0}")]
    Header(String),
}

impl CheckpointError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            CheckpointError::BadMagic => "bad-magic",
            CheckpointError::Version(_) => "bad-version",
            CheckpointError::TruncatedHeader(_) => "truncated-header",
            CheckpointError::TruncatedPayload { .. } => "truncated-payload",
            CheckpointError::OutOfBounds { .. } => "index-out-of-bounds",
            CheckpointError::Overlap { .. } => "index-overlap",
            CheckpointError::Misaligned(_) => "index-misaligned",
            CheckpointError::Header(_) => "bad-header",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Checkpoint { path: PathBuf, source: CheckpointError },
    #[error(transparent)]
    Core(#[from] growkit_core::Error),
    #[error("{0}")]
    Format(String),
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{0}")]
    Train(String),
}

impl Error {
    /// Process exit status for this error: 3 for file system failures, 1 for
    /// a diverged run, 2 for everything the caller got wrong.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Io { .. } => 3,
            Error::Train(_) => 1,
            _ => 2,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
