use thiserror::Error;

/// Errors surfaced by the numerical routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("contour passes too close to a singularity at {point} (radius {radius})")]
    PoleCollision { point: String, radius: f64 },

    #[error("quadrature did not converge: last two iterates {previous} and {last}")]
    Convergence { previous: f64, last: f64 },

    #[error("roundoff floor {floor:e} of the contour sum swamps the value {value:e}")]
    PrecisionLoss { floor: f64, value: f64 },

    #[error("truncation window too small: leaked mass {leaked:e} exceeds {tolerance:e}")]
    Truncation { leaked: f64, tolerance: f64 },

    #[error("composition integrand does not decay on the window: tail bound {bound:e}")]
    NonDecaying { bound: f64 },

    #[error("operation not pointwise evaluable: {0}")]
    Distributional(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("incomparable records: {0}")]
    Incomparable(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Config(e.to_string())
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
