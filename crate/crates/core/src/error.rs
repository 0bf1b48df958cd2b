use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("transform has a pole at s = {0}")]
    Pole(String),

    #[error("unsupported family for this operation: {0}")]
    UnsupportedFamily(String),

    #[error("index {l} is not strictly below {n}")]
    Order { l: String, n: String },

    #[error("batch moment {0} is not available from the provider")]
    Range(String),

    #[error("analytic recursion needs exponential delays with a common rate: {0}")]
    NonExponentialDelay(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("series tail bound {bound:e} exceeds tolerance {tol:e}")]
    Radius { bound: f64, tol: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("hazard class of the interarrival law is unknown")]
    HazardClass,

    #[error("characteristic roots are not simple: {0}")]
    MultipleRoot(String),

    #[error("degenerate expansion: {0}")]
    Nondegeneracy(String),

    #[error("outside the model scope of this operation: {0}")]
    Scope(String),

    #[error("numerical divergence: {0}")]
    Divergence(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
