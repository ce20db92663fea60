use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: event ({x}, {y}) outside {width}x{height} sensor")]
    OutOfBounds { line: usize, x: i64, y: i64, width: usize, height: usize },

    #[error("line {line}: timestamp {t} precedes previous timestamp {previous}")]
    Unsorted { line: usize, t: u64, previous: u64 },

    #[error("format error: {0}")]
    Format(String),

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("unsupported PGM maxval {0} (only 255 is accepted)")]
    UnsupportedMaxval(u32),

    #[error("line {line}: quaternion norm {norm} is not within 1e-6 of 1")]
    NonUnitQuaternion { line: usize, norm: f64 },

    #[error("resolution mismatch: expected {expected:?}, found {found:?}")]
    ResolutionMismatch { expected: (usize, usize), found: (usize, usize) },

    #[error("{width}x{height} is not divisible by {factor}")]
    NotDivisible { width: usize, height: usize, factor: usize },

    #[error("empty time window: t_start {t_start} >= t_end {t_end}")]
    InvalidWindow { t_start: u64, t_end: u64 },

    #[error("rotation angle {angle} rad is too close to pi for a unique logarithm")]
    RotationNearPi { angle: f64 },

    #[error("matrix is not antisymmetric (max deviation {deviation})")]
    NotAntisymmetric { deviation: f64 },

    #[error("time {t} us outside trajectory span [{start}, {end}]")]
    OutsideTrajectory { t: u64, start: u64, end: u64 },

    #[error("no depth map within {tolerance} us of t0 = {t0} us")]
    NoDepth { t0: u64, tolerance: u64 },

    #[error("evaluation set is empty")]
    EmptyEvaluation,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
