//! Error type shared across the crate.

use thiserror::Error;

/// Everything that can go wrong while building or solving a transport problem.
#[derive(Debug, Error)]
pub enum OtmaError {
    /// A target polygon failed validation (too few points, wrong orientation,
    /// a reflex vertex, or degenerate area).
    #[error("invalid convex target: {0}")]
    InvalidTarget(String),

    /// A direction passed to a support-function query was not unit length.
    #[error("direction ({0}, {1}) is not unit length")]
    NonUnitDirection(f64, f64),

    /// Restricting a direction set to a half-plane left nothing usable.
    #[error("no admissible directions remain for outward normal ({0}, {1})")]
    EmptyDirectionSet(f64, f64),

    /// Grid or stencil construction was asked for unusable parameters.
    #[error("invalid discretization: {0}")]
    InvalidDiscretization(String),

    /// A density had zero (or negative) total mass and cannot be normalized.
    #[error("density has non-positive total mass {0}")]
    ZeroMass(f64),

    /// The target-side density fell below the safe evaluation floor.
    #[error("target density {value} at ({x}, {y}) is below the floor {floor}")]
    DensityFloor { value: f64, x: f64, y: f64, floor: f64 },

    /// The iterative linear solver failed to reduce the Newton correction.
    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    /// The nonlinear iteration diverged or produced non-finite values.
    #[error("solver failed: {0}")]
    SolverFailure(String),

    /// No rotation angle makes the closed-form ellipse map symmetric positive
    /// definite for the supplied shape matrices.
    #[error("no valid ellipse map branch: {0}")]
    EllipseMapBranch(String),

    /// Discrete measures passed to the assignment solver were unusable.
    #[error("invalid assignment input: {0}")]
    InvalidAssignment(String),

    /// A configuration file or value could not be used.
    #[error("configuration error: {0}")]
    Config(String),

    /// Reading or writing a data file failed.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// A CSV payload could not be parsed.
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    /// A JSON payload could not be parsed.
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, OtmaError>;
