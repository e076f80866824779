use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("basis size overflow for p={p}, q={q}, degree={degree}")]
    Sizing { p: usize, q: usize, degree: usize },

    #[error("monomial not in basis: {0}")]
    Lookup(String),

    #[error("structural mismatch: {0}")]
    Structural(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("relaxation order {k} is below the minimum {min}")]
    Order { k: usize, min: usize },

    #[error("atom extraction failed: {0}")]
    ExtractionFailed(String),

    #[error("linear algebra failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
