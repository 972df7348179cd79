use thiserror::Error;

/// Errors raised across the simulator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("config field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("covariance is not symmetric positive semidefinite")]
    InvalidCovariance,

    #[error("psi calibration is degenerate: every sampled covariance has zero norm")]
    CalibrationDegenerate,

    #[error("geometry is singular (FIM condition number {condition:.3e})")]
    GeometrySingular { condition: f64 },

    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),

    #[error("collision linearization needs distinct expansion points")]
    DegenerateLinearization,

    #[error("robust SNR target unreachable: worst-case SNR directly overhead is {overhead_db:.2} dB")]
    SnrInfeasible { overhead_db: f64 },

    #[error("convex subproblem has an empty feasible set (max violation {violation:.3e})")]
    SubproblemInfeasible { violation: f64 },

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
