use thiserror::Error;

/// Errors raised by geometry, estimation and verification routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("distance {distance} exceeds the usable injectivity radius {limit}")]
    InjectivityRadiusExceeded { distance: f64, limit: f64 },

    #[error("points coincide; the distance gradient is undefined")]
    CoincidentPoints,

    #[error("model space has no boundary")]
    NoBoundary,

    #[error("point is not on the boundary (offset {offset:e})")]
    NotOnBoundary { offset: f64 },

    #[error("reference function violates the class condition: {0}")]
    ClassViolation(String),

    #[error("reference function is not positive at Y (phi = {phi})")]
    DomainBoundaryReached { phi: f64 },

    #[error("test function must be strictly positive for log mode (found {value} )")]
    NonpositiveF { value: f64 },

    #[error("no closed-form oracle for {0}")]
    NoOracle(String),

    #[error("gradient of log f vanishes at the base point")]
    ZeroGradient,

    #[error("minimal geodesic leaves the domain at parameter {at}")]
    GeodesicLeavesDomain { at: f64 },

    #[error("invalid model space: {0}")]
    InvalidModel(String),

    #[error("invalid argument `{field}`: {reason}")]
    InvalidArgument { field: String, reason: String },

    #[error("config error at {location}: {message}")]
    Config { location: String, message: String },

    #[error("precondition failed for {point}: {message}")]
    Precondition { point: String, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
