use thiserror::Error;

pub type Result<T> = std::result::Result<T, OcpError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OcpError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// A pointwise evaluation produced NaN or infinity.
    #[error("non-finite value in {what} at index {index}")]
    NonFinite { what: &'static str, index: usize },

    #[error("iteration cap of {cap} reached in {what}")]
    IterationCap { what: &'static str, cap: usize },

    #[error("singular matrix: zero pivot in column {column}")]
    SingularMatrix { column: usize },

    #[error("quadrature did not reach tolerance on [{a}, {b}]")]
    Quadrature { a: f64, b: f64 },

    #[error("Krylov solver breakdown: {0}")]
    KrylovBreakdown(String),

    #[error("linear solve did not converge: residual {residual:e} after {iterations} iterations")]
    LinearSolveFailed { iterations: usize, residual: f64 },

    #[error("Newton did not converge: {0}")]
    NewtonFailed(String),

    #[error("subdomain {subdomain}: {source}")]
    Subdomain {
        subdomain: usize,
        #[source]
        source: Box<OcpError>,
    },

    #[error("stale subdomain corrections: the Jacobian was requested at a different iterate")]
    StaleCorrections,

    #[error("config: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for OcpError {
    fn from(e: std::io::Error) -> Self {
        OcpError::Io(e.to_string())
    }
}

impl From<csv::Error> for OcpError {
    fn from(e: csv::Error) -> Self {
        OcpError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for OcpError {
    fn from(e: serde_json::Error) -> Self {
        OcpError::Io(e.to_string())
    }
}
