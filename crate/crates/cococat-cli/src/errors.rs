//! Command-level error type carrying the process exit code.
//!
//! Exit codes: 1 for configuration, schema, and usage errors; 2 for
//! numerical failures (tolerance not reached, fits that do not converge,
//! validation checks out of band); 3 for I/O and data-file errors.

use std::fmt;

use cococat::Error;

pub const EXIT_CONFIG: u8 = 1;
pub const EXIT_NUMERICAL: u8 = 2;
pub const EXIT_IO: u8 = 3;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

pub type CliResult<T> = Result<T, CliError>;

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl CliError {
    /// A usage or configuration problem.
    pub fn usage(message: impl Into<String>) -> CliError {
        CliError { code: EXIT_CONFIG, message: message.into() }
    }

    /// A numerical failure.
    pub fn numerical(message: impl Into<String>) -> CliError {
        CliError { code: EXIT_NUMERICAL, message: message.into() }
    }

    /// A file access problem.
    pub fn io(message: impl Into<String>) -> CliError {
        CliError { code: EXIT_IO, message: message.into() }
    }

    /// Maps fitting-stage errors: estimation failures on valid input
    /// data (degenerate samples, non-convergence) are numerical, while
    /// file problems stay I/O.
    pub fn fit(error: Error) -> CliError {
        let code = match &error {
            Error::InvalidParameter(_) | Error::Tolerance(_) => EXIT_NUMERICAL,
            Error::Io(_) | Error::Parse(_) => EXIT_IO,
        };
        CliError { code, message: error.to_string() }
    }
}

impl From<Error> for CliError {
    /// Default mapping for computation-stage errors: bad parameters are
    /// configuration problems, tolerance failures are numerical, and
    /// file problems are I/O.
    fn from(error: Error) -> CliError {
        let code = match &error {
            Error::InvalidParameter(_) => EXIT_CONFIG,
            Error::Tolerance(_) => EXIT_NUMERICAL,
            Error::Io(_) | Error::Parse(_) => EXIT_IO,
        };
        CliError { code, message: error.to_string() }
    }
}
