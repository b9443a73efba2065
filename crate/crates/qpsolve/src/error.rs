//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },

    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },

    #[error("domain error evaluating `{what}` at {point}: {message}")]
    EvalDomain {
        what: String,
        point: String,
        message: String,
    },

    #[error("malformed Fourier field: {0}")]
    MalformedField(String),

    #[error("grid too small: {0}")]
    GridTooSmall(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("integration error: {0}")]
    Integration(String),

    #[error("no connection found: {0}")]
    NoConnection(String),

    #[error("domain violation: {0}")]
    DomainViolation(String),

    #[error("solver error: {0}")]
    Solver(String),

    #[error("problem file error: {0}")]
    ProblemFile(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
