use thiserror::Error;

/// Errors raised by the simulation kernel.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid rotation: {0}")]
    InvalidRotation(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid chain: {0}")]
    InvalidChain(String),

    #[error("mass matrix is not positive definite")]
    SingularMassMatrix,

    #[error("solver diverged at substep {substep}: {detail}")]
    SolverDivergence { substep: u64, detail: String },

    /// A tool specification field is outside its documented range.
    #[error("invalid tool spec field `{field}`: {reason}")]
    InvalidToolSpec { field: String, reason: String },

    #[error("tool generation failed ({params}): {reason}")]
    ToolGeneration { params: String, reason: String },

    #[error("mesh is not watertight: {0}")]
    NotWatertight(String),

    #[error("invalid config `{field}`: {reason}")]
    InvalidConfig { field: String, reason: String },

    #[error("reset failed: {0}")]
    Reset(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("instance {index}: {source}")]
    Instance {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// True for failures that originate in the particle solver.
    pub fn is_divergence(&self) -> bool {
        match self {
            Error::SolverDivergence { .. } => true,
            Error::Instance { source, .. } => source.is_divergence(),
            Error::Reset(msg) => msg.contains("diverged"),
            _ => false,
        }
    }
}
