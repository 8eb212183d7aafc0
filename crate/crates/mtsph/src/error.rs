use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] mtsph_core::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("validation failed: {0}")]
    Validation(String),
}

impl Error {
    /// Process exit code: 2 for configuration errors, 3 for failed numerical
    /// validation, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Core(mtsph_core::Error::Config(_)) => 2,
            Error::Validation(_) => 3,
            _ => 1,
        }
    }
}
