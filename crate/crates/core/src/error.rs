use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    /// The Euclidean form is only transient for d >= 3.
    #[error("dimension {0} is not transient (need d >= 3)")]
    Dimension(usize),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("no convergence: {0}")]
    Convergence(String),

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("cell (n = {n}, seed = {seed}) failed: {source}")]
    Cell {
        n: usize,
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param(msg: impl Into<String>) -> Error {
    Error::Param(msg.into())
}

pub(crate) fn shape(msg: impl Into<String>) -> Error {
    Error::Shape(msg.into())
}
