use thiserror::Error;

/// Errors produced anywhere in the pose-from-silhouette pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate silhouette: enclosed area {area:e} is not above tolerance {tolerance:e}")]
    DegenerateSilhouette { area: f64, tolerance: f64 },

    #[error("insufficient points: need at least {needed}, got {found}")]
    InsufficientPoints { needed: usize, found: usize },

    #[error("degenerate projection: all projected points are collinear")]
    DegenerateProjection,

    #[error("ellipse fit failed: {0}")]
    EllipseFitFailure(String),

    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(String),

    #[error("mesh has no faces with positive area")]
    EmptyMesh,

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("point {index} lies behind the camera (depth {depth:e} <= {z_min:e})")]
    PointBehindCamera { index: usize, depth: f64, z_min: f64 },

    #[error("query point ({x}, {y}) is outside the masked field coverage")]
    OutsideField { x: f64, y: f64 },

    #[error("no candidate poses: {0}")]
    NoCandidates(String),

    #[error("template fingerprint mismatch: field has {field:016x}, template has {template:016x}")]
    FingerprintMismatch { field: u64, template: u64 },

    #[error("projection mode mismatch: {0}")]
    ModeMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("bundle version mismatch: found {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("corrupt bundle payload: {0}")]
    CorruptPayload(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
