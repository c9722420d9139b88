use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("NotUnitary: |P^H P - I| = {deviation:e} exceeds tolerance")]
    NotUnitary { deviation: f64 },

    #[error("NotSkew: |S + S^T| = {deviation:e} exceeds tolerance")]
    NotSkew { deviation: f64 },

    #[error("ZeroSpectralParameter: loops cannot be evaluated at lambda = 0")]
    ZeroSpectralParameter,

    #[error("BigCellViolation: truncated Toeplitz system has condition number {condition:e}")]
    BigCellViolation { condition: f64 },

    #[error("TruncationTooSmall: residual {residual:e} at truncation {truncation} did not reach tolerance")]
    TruncationTooSmall { truncation: usize, residual: f64 },

    #[error("TwistViolation: coefficient of lambda^{power} breaks the twist by {magnitude:e}")]
    TwistViolation { power: i32, magnitude: f64 },

    #[error("NotReal: imaginary part {magnitude:e} in Fourier coefficient of lambda^{power}")]
    NotReal { power: i32, magnitude: f64 },

    #[error("IncompatibleCorner: x data starts at {x_corner} but y data starts at {y_corner}")]
    IncompatibleCorner { x_corner: f64, y_corner: f64 },

    #[error("NonconvergentCell: Picard iteration failed at cell ({i}, {j})")]
    NonconvergentCell { i: usize, j: usize },

    #[error("StepFailure: {0}")]
    StepFailure(String),

    #[error("SingularAngle: sin(phi) vanishes at phi = {phi}")]
    SingularAngle { phi: f64 },

    #[error("NonpositiveProfile: profile value {value} at index {index} is not positive")]
    NonpositiveProfile { index: usize, value: f64 },

    #[error("InvalidGrid: {0}")]
    InvalidGrid(String),

    #[error("NoOrigin: grid has no node at (0, 0)")]
    NoOrigin,

    #[error("ShapeMismatch: {0}")]
    ShapeMismatch(String),

    #[error("InvalidParameter: {0}")]
    InvalidParameter(String),

    #[error("Parse: {0}")]
    Parse(String),

    #[error("IOFailure: {0}")]
    Io(#[from] std::io::Error),

    #[error("Json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable name, used in reports and CLI messages.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NotUnitary { .. } => "NotUnitary",
            Error::NotSkew { .. } => "NotSkew",
            Error::ZeroSpectralParameter => "ZeroSpectralParameter",
            Error::BigCellViolation { .. } => "BigCellViolation",
            Error::TruncationTooSmall { .. } => "TruncationTooSmall",
            Error::TwistViolation { .. } => "TwistViolation",
            Error::NotReal { .. } => "NotReal",
            Error::IncompatibleCorner { .. } => "IncompatibleCorner",
            Error::NonconvergentCell { .. } => "NonconvergentCell",
            Error::StepFailure(_) => "StepFailure",
            Error::SingularAngle { .. } => "SingularAngle",
            Error::NonpositiveProfile { .. } => "NonpositiveProfile",
            Error::InvalidGrid(_) => "InvalidGrid",
            Error::NoOrigin => "NoOrigin",
            Error::ShapeMismatch(_) => "ShapeMismatch",
            Error::InvalidParameter(_) => "InvalidParameter",
            Error::Parse(_) => "Parse",
            Error::Io(_) => "IOFailure",
            Error::Json(_) => "Json",
        }
    }
}
