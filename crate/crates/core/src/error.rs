use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid constraint: {0}")]
    InvalidConstraint(String),

    #[error("equilibrium solver did not converge after {iterations} iterations (gradient norm {gradient_norm:e})")]
    SolverFailure {
        iterations: usize,
        gradient_norm: f64,
    },

    #[error("linear chain unstable on {axis} axis: squared mode frequency ratio {eigenvalue:e}")]
    ChainInstability { axis: char, eigenvalue: f64 },

    #[error("wavevector has no projection on any trap axis")]
    NoCoupling,

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("sample time {time:e} s outside gate window [0, {duration:e}] s")]
    SampleOutOfRange { time: f64, duration: f64 },

    #[error("all {instances} optimization instances diverged: {details}")]
    OptimizationFailure { instances: usize, details: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::SolverFailure { .. } | Error::OptimizationFailure { .. } => 4,
            Error::Io(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
