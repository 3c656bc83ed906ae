use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("polygon needs at least 3 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("ray contour needs at least 5 rays, got {0}")]
    TooFewRays(usize),
    #[error("non-finite coordinate")]
    NonFinite,
    #[error("radii must be positive")]
    NonPositiveRadius,
    #[error("polygon is not simple")]
    NotSimple,
    #[error("polygon has zero area")]
    Degenerate,
    #[error("reference point is not strictly inside the polygon")]
    CenterOutside,
    #[error("ray from an interior point did not meet the boundary")]
    NoIntersection,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FieldError {
    #[error("field must be at least 3x3 for the Sobel stencil, got {width}x{height}")]
    FieldTooSmall { width: usize, height: usize },
    #[error("distance transform of a mask without foreground is undefined")]
    EmptyMask,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("field values must be finite")]
    NonFinite,
    #[error("field values must be non-negative")]
    Negative,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvolutionError {
    #[error("reference point lies outside the image")]
    CenterOutsideImage,
    #[error("radius became non-finite at step {step}; the time step is too large")]
    NonFinite { step: usize },
    #[error("implicit system matrix is singular")]
    SingularSystem,
    #[error("segment has no foreground pixels")]
    EmptySegment,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Field(#[from] FieldError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LearningError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("trajectory does not match the fields or the gradient: {0}")]
    TrajectoryMismatch(String),
    #[error("no interior reference point found after {0} draws")]
    NoInteriorPoint(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Evolution(#[from] EvolutionError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Field(#[from] FieldError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("mask dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("alignment recall needs non-empty predictions and ground truth")]
    EmptyInput,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SceneError {
    #[error("could not generate a non-degenerate polygon after {0} attempts")]
    DegenerateAfterRetries(usize),
    #[error("could not place all instances after {0} attempts")]
    PlacementFailed(usize),
    #[error("invalid scene: {0}")]
    Invalid(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Field(#[from] FieldError),
}

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("bad magic or header: {0}")]
    BadHeader(String),
    #[error("payload truncated: expected {expected} bytes, got {got}")]
    Truncated { expected: usize, got: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Field(#[from] FieldError),
}
