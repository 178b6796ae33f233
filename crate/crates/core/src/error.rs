use thiserror::Error;

/// Errors produced by the library, grouped by the failure class they report.
#[derive(Debug, Error)]
pub enum Error {
    /// Shapes of two operands do not line up.
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    /// A scalar argument is outside its valid range.
    #[error("parameter error: {0}")]
    Parameter(String),
    /// A configuration (training setup, experiment spec) is inconsistent.
    #[error("config error: {0}")]
    Config(String),
    /// Input data violates a precondition (missing labels, bad cells).
    #[error("data error: {0}")]
    Data(String),
    /// A computation produced non-finite values.
    #[error("numeric error: {0}")]
    Numeric(String),
    /// An operation was called on a model of the wrong visible-unit kind.
    #[error("model kind error: {0}")]
    Kind(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Serialization(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 config, 3 data, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Parameter(_) => 2,
            Error::Data(_) | Error::Dimension(_) | Error::Kind(_) | Error::Io(_) => 3,
            Error::Numeric(_) => 4,
            Error::Serialization(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
