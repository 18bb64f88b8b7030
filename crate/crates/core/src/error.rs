use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("infinite variance: {0}")]
    InfiniteVariance(String),

    #[error("zero normalization mass: {0}")]
    ZeroMass(String),

    #[error("quadrature did not converge: estimate {estimate:e}, error estimate {error:e} after {subdivisions} subdivisions")]
    Quadrature {
        estimate: f64,
        error: f64,
        subdivisions: usize,
    },

    #[error("non-finite value {value} at t = {t}, x = {x:?}")]
    NonFinite { t: f64, x: Vec<f64>, value: f64 },

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("enumeration of size {n} exceeds the supported maximum {max}")]
    TooLarge { n: usize, max: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
