use thiserror::Error;

/// Errors raised by the lab. Validation problems map to CLI exit code 2,
/// solver failures to exit code 3.
#[derive(Debug, Error)]
pub enum GlError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("placement mismatch: expected {expected}, found {found}")]
    Placement { expected: String, found: String },
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("invalid pinning data: {0}")]
    Pinning(String),
    #[error("{what} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence {
        what: String,
        iterations: usize,
        residual: f64,
    },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl GlError {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            GlError::NoConvergence { .. } | GlError::Numerical(_) => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, GlError>;
