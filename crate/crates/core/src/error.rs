use thiserror::Error;

/// Errors shared across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("{what} dimension {dim} exceeds the {cap_name} cap of {cap}")]
    ResourceCap {
        what: &'static str,
        dim: usize,
        cap_name: &'static str,
        cap: usize,
    },

    #[error("invalid state: {0}")]
    InvalidState(String),

    /// Raised before integrating when `dt` times the generator's spectral
    /// bound leaves the RK4 stability region.
    #[error("step size too large: dt * spectral bound = {product:.3e} > {limit}")]
    StepSize { product: f64, limit: f64 },

    /// Positivity is monitored, not enforced; a clearly negative eigenvalue
    /// aborts the run since it signals a too-large step.
    #[error("density matrix lost positivity at t = {time}: eigenvalue {eigenvalue:.3e}")]
    PositivityLost { time: f64, eigenvalue: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid_arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
