use thiserror::Error;

/// Errors raised by the model, solvers and I/O helpers.
#[derive(Debug, Error)]
pub enum GsError {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("negative transmit power {0}")]
    NegativePower(f64),

    #[error("length mismatch: {what} has {got} entries, expected {expected}")]
    LengthMismatch { what: &'static str, got: usize, expected: usize },

    #[error("value {value} at index {index} lies outside [0, 1]")]
    OutOfBox { index: usize, value: f64 },

    #[error("empty trace")]
    EmptyTrace,

    #[error("trace has {frames} frames, exhaustive search is limited to {max}")]
    TooManyFrames { frames: usize, max: usize },

    #[error("image geometry mismatch: {0}")]
    Geometry(String),

    #[error("image too small for SSIM: {width}x{height}, need at least {min} per side")]
    ImageTooSmall { width: usize, height: usize, min: usize },

    #[error("frame {index}: {message}")]
    Frame { index: usize, message: String },

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("malformed trace file: {0}")]
    TraceFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

pub type Result<T, E = GsError> = std::result::Result<T, E>;
