use thiserror::Error;

/// Errors produced by model construction, solvers, the simulator and the CLI.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied parameter is outside its admissible range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A model assumption does not hold (non-stochastic matrix, non-ergodic
    /// chain, inconsistent ensemble, ...).
    #[error("model error: {0}")]
    Model(String),

    /// Matrix / vector dimensions are inconsistent.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A numerical procedure failed to converge or produced an invalid result.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// A scenario configuration could not be parsed or validated.
    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code used by the CLI: 2 for configuration problems,
    /// 3 for numerical/solver failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParameter(_) | Error::Model(_) | Error::Config(_) => 2,
            Error::Numerical(_) => 3,
            Error::Dimension(_) => 2,
            Error::Io(_) => 1,
        }
    }
}
