use thiserror::Error;

/// Errors raised anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// A numeric argument lies outside the domain of the function.
    #[error("domain error: {0}")]
    Domain(String),

    /// A queue would run with traffic intensity at or above one. `agent` is
    /// set when the queue belongs to a known agent.
    #[error("unstable queue (agent {agent:?}): rho = {rho:.6} >= 1")]
    Stability { agent: Option<usize>, rho: f64 },

    /// Malformed graph, chain or matrix shape.
    #[error("structural error: {0}")]
    Structural(String),

    /// A pool or batch is too small for the requested selection.
    #[error("size error: {0}")]
    Size(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// Non-finite loss or parameter during training.
    #[error("training diverged at epoch {epoch}: {reason}")]
    Training { epoch: usize, reason: String },

    /// The caller violated an operation's precondition (e.g. a masked action).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn structural(msg: impl Into<String>) -> Self {
        Error::Structural(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
