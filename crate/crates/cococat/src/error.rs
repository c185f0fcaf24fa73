use thiserror::Error;

/// Errors produced by the pricing library.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter is outside its documented domain: wrong sign, NaN,
    /// inconsistent dimensions, or a schedule that does not divide evenly.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    /// An iterative numerical routine (quadrature, grid convolution, root
    /// search) exhausted its refinement budget before reaching the target
    /// accuracy.
    #[error("numerical tolerance not reached: {0}")]
    Tolerance(String),
    /// A file could not be read or written.
    #[error("i/o error: {0}")]
    Io(String),
    /// A data file was readable but malformed.
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

pub(crate) fn tolerance(msg: impl Into<String>) -> Error {
    Error::Tolerance(msg.into())
}

pub(crate) fn io_error(msg: impl Into<String>) -> Error {
    Error::Io(msg.into())
}

pub(crate) fn parse_error(msg: impl Into<String>) -> Error {
    Error::Parse(msg.into())
}

/// Checks that a value is finite and strictly positive.
pub(crate) fn require_positive(value: f64, name: &str) -> Result<f64> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(invalid(format!("{name} must be finite and positive, got {value}")))
    }
}

/// Checks that a value is finite and nonnegative.
pub(crate) fn require_nonnegative(value: f64, name: &str) -> Result<f64> {
    if value.is_finite() && value >= 0.0 {
        Ok(value)
    } else {
        Err(invalid(format!("{name} must be finite and nonnegative, got {value}")))
    }
}

/// Checks that a value lies in the closed interval [lo, hi].
pub(crate) fn require_in_range(value: f64, lo: f64, hi: f64, name: &str) -> Result<f64> {
    if value.is_finite() && value >= lo && value <= hi {
        Ok(value)
    } else {
        Err(invalid(format!("{name} must lie in [{lo}, {hi}], got {value}")))
    }
}
