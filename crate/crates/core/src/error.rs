use thiserror::Error;

/// Errors raised by estimation, forecasting, evaluation and I/O.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not symmetric: max |a_ij - a_ji| = {max_gap:e}")]
    Symmetry { max_gap: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("degenerate variance at diagonal position {index}: {value}")]
    DegenerateVariance { index: usize, value: f64 },

    #[error("cannot compose covariance: {0}")]
    Composition(String),

    #[error("no intraday returns supplied for the day")]
    EmptyDay,

    #[error("insufficient history: need more than {needed} observations, got {got}")]
    InsufficientHistory { needed: usize, got: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("design matrix is rank deficient; collinear columns: {}", .columns.join(", "))]
    Collinearity { columns: Vec<String> },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("invalid model parameters: {0}")]
    Parameter(String),

    #[error("likelihood is not finite at the starting point: {0}")]
    Initialization(String),

    #[error("forecast matrix is not positive definite (smallest eigenvalue {min_eig:e})")]
    SingularForecast { min_eig: f64 },

    #[error("Sharpe ratio undefined: return series has zero variance")]
    UndefinedSharpe,

    #[error("utility equation has no real root (discriminant {0:e})")]
    InfeasibleUtility(f64),

    #[error("portfolio return of -100% makes weight drift undefined")]
    DegenerateDrift,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("date alignment error: {0}")]
    Alignment(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("I/O error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        match e.kind() {
            csv::ErrorKind::Io(_) => Error::Io(e.to_string()),
            _ => Error::Parse(e.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
