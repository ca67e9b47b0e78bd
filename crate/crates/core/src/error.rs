use thiserror::Error;

/// Errors raised by the analysis library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix contains a non-finite entry")]
    NonFinite,

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("matrix is not in Jordan normal form: {0}")]
    NotJordan(String),

    #[error("multiplicative-order test received a zero value")]
    ZeroValue,

    #[error("{what}: needs {needed:e} operations, cap is {cap:e}")]
    CapExceeded { what: String, needed: f64, cap: f64 },

    #[error("operation requires a finite-state channel, got {0}")]
    UnsupportedChannel(&'static str),

    #[error("no stability exponent supplied for block {0}")]
    MissingBlock(usize),

    #[error("exact computation not applicable: {0}")]
    NotApplicable(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
