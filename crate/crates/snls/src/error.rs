use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("fields live on incompatible grids")]
    IncompatibleGrids,
    #[error("solver did not converge (residual {residual:.3e})")]
    SolverFailure { residual: f64 },
    #[error("profile center {center} outside the safe range of the domain")]
    DomainExceeded { center: f64 },
    #[error("spectral failure: {0}")]
    SpectralFailure(String),
    #[error("constrained quadratic form is not coercive (gap {gap:.3e})")]
    CoercivityViolation { gap: f64 },
    #[error("noise tail beyond the horizon is {tail:.3e}, above the contract")]
    TruncationError { tail: f64 },
    #[error("numerical blow-up at t = {t}")]
    NumericalBlowup { t: f64 },
    #[error("decomposition did not converge; residual history {history:?}")]
    DecompositionFailure { history: Vec<f64> },
    #[error("field is {distance:.3e} away from the soliton sum, outside the basin {radius:.3e}")]
    OutOfBasin { distance: f64, radius: f64 },
    #[error("could not solve for modulated final data: {0}")]
    ModulatedDataFailure(String),
    #[error("shooting failed: {reason}")]
    ShootingFailure { reason: String, best_a_minus: Vec<f64>, best_exit_time: f64 },
    #[error("fit failure: {0}")]
    FitFailure(String),
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
