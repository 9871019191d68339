//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A value or dataset does not match the schema it is used against.
    #[error("schema error: {0}")]
    Schema(String),

    /// Text encoding rejected a record (e.g. embedded newline).
    #[error("encoding error: {0}")]
    Encoding(String),

    /// Malformed structured-container file.
    #[error("format error at byte {offset}: {msg}")]
    Format { offset: u64, msg: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// A user-defined function failed inside the engine.
    #[error("udf error at stage {stage}, partition {partition}: {msg}")]
    Udf {
        stage: usize,
        partition: usize,
        msg: String,
    },

    /// A tap-point input constraint was violated.
    #[error("constraint violation: {0}")]
    Constraint(String),

    #[error("monitor error: {0}")]
    Monitor(String),

    #[error("metric error: {0}")]
    Metric(String),

    /// No applicable mutations could be derived for a schema.
    #[error("mutation derivation error: {0}")]
    Derivation(String),

    #[error("pseudo-inverse error: {0}")]
    Inverse(String),

    #[error("registry error: {0}")]
    Registry(String),

    /// Argument outside a kernel's domain (e.g. collatz_length(0)).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("config error: {0}")]
    Config(String),
}
