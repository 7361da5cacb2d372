//! Crate-wide error type.

/// Errors surfaced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Input bytes are not valid JSON.
    #[error("parse error at byte {offset} (line {line}, column {column}): {message}")]
    Parse {
        offset: usize,
        line: usize,
        column: usize,
        message: String,
    },

    /// JSON is well-formed but does not match the expected schema.
    #[error("schema error: {0}")]
    Schema(String),

    /// An argument lies outside its documented domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Caller-supplied data is inconsistent (unknown ids, wrong file kind).
    #[error("input error: {0}")]
    Input(String),

    /// An internal contract was violated; indicates a bug, never bad input.
    #[error("internal error: {0}")]
    Internal(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
