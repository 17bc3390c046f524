use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A parameter lies outside its admissible domain.
    #[error("parameter {name} = {value} violates {constraint}")]
    ParameterDomain {
        name: &'static str,
        value: f64,
        constraint: &'static str,
    },
    /// An admissibility inequality between several parameters fails.
    #[error("inadmissible parameters: {inequality} does not hold ({detail})")]
    Admissibility { inequality: &'static str, detail: String },
    /// A numerical procedure did not reach its target accuracy.
    #[error("{what} did not converge: achieved {achieved:.3e}, target {target:.3e}")]
    Numeric {
        what: &'static str,
        achieved: f64,
        target: f64,
    },
    /// A refinement or truncation certificate failed.
    #[error("{what} drift {drift:.3e} exceeds {limit:.3e}")]
    Convergence { what: &'static str, drift: f64, limit: f64 },
    /// Step-function breakpoints do not lie on the path grid.
    #[error("breakpoint {0} is not a grid point")]
    Alignment(f64),
    /// Ratio of moments with a vanishing denominator.
    #[error("moment ratio undefined: denominator vanishes")]
    UndefinedRatio,
    /// Too few usable points for an estimator.
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    /// Malformed input (shape mismatch, empty grid, ...).
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}
