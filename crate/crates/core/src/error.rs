use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("token id {token} at position {position} is outside the vocabulary of size {vocab}")]
    TokenOutOfRange { token: u32, position: usize, vocab: usize },
    #[error("sequence of length {len} exceeds the maximum of {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("shape mismatch for {name}: expected {expected}, got {actual}")]
    Shape { name: String, expected: String, actual: String },
    #[error("stack pattern error at position {position}: {message}")]
    Pattern { position: usize, message: String },
    #[error("invalid input: {0}")]
    Input(String),
    #[error("{curve} curve never reaches target loss {target}")]
    Unreachable { curve: String, target: f64 },
    #[error("model has {params} parameters, above the gradient-check limit of {limit}")]
    TooLarge { params: usize, limit: usize },
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }
}
