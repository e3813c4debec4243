use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("kernel is singular on the diagonal for d = {dimension}")]
    DiagonalSingularity { dimension: usize },

    #[error("characteristic is infinite at {point:?} (atom at evaluation point)")]
    InfiniteCharacteristic { point: Vec<f64> },

    #[error("measure is not of Kato class: {0}")]
    NotKato(String),

    #[error("unsupported region: {0}")]
    UnsupportedRegion(String),

    #[error("unsupported dimension {dimension} for {what}")]
    UnsupportedDimension { dimension: usize, what: String },

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("derivative path diverged at step {step}")]
    Divergence { step: usize },

    #[error("scenario error: {0}")]
    Scenario(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}
