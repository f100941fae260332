use thiserror::Error;

/// Errors raised anywhere in the relaxation pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("interval division by a denominator containing zero: [{lo}, {hi}]")]
    DivisionByZeroInterval { lo: f64, hi: f64 },

    #[error("value {value} lies outside its range [{lo}, {hi}]")]
    OutOfRange { value: f64, lo: f64, hi: f64 },

    #[error("crossed relaxation pair: cv {cv} > cc {cc}")]
    InvalidRelaxationPair { cv: f64, cc: f64 },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("evaluation domain error: {0}")]
    EvalDomain(String),

    #[error("cell lies outside the distribution support: {0}")]
    CellOutsideSupport(String),

    #[error("cell has zero probability (mass {0:e})")]
    ZeroProbabilityCell(f64),

    #[error("integration step size fell below the minimum {min_step:e} at t = {t}")]
    StepFailure { t: f64, min_step: f64 },

    #[error("non-finite state encountered at t = {t}")]
    NonFiniteState { t: f64 },

    #[error("state bounds blew up at t = {t}: width {width:e} exceeds cap {cap:e}")]
    BoundBlowup { t: f64, width: f64, cap: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{0} of {1} sample simulations failed")]
    SampleFailures(usize, usize),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// True for failures of the numerical machinery (as opposed to bad input).
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::DivisionByZeroInterval { .. }
                | Error::InvalidRelaxationPair { .. }
                | Error::EvalDomain(_)
                | Error::ZeroProbabilityCell(_)
                | Error::StepFailure { .. }
                | Error::NonFiniteState { .. }
                | Error::BoundBlowup { .. }
                | Error::SampleFailures(..)
        )
    }

    pub(crate) fn parse(line: usize, column: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            column,
            message: message.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
