use thiserror::Error;

/// Errors raised anywhere in the pipeline.
///
/// Variant names double as the stable error identifiers printed by the CLI
/// and returned by the HTTP service.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter {index} = {value} outside [{min}, {max}]")]
    ParamOutOfBounds {
        index: usize,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("expected {expected} structure parameters, got {got}")]
    ParamCount { expected: usize, got: usize },
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("element {element} inverted (J = {jacobian:e})")]
    ElementInverted { element: usize, jacobian: f64 },
    #[error("interpenetration detected (distance {distance:e})")]
    InterpenetrationDetected { distance: f64 },
    #[error("Newton solver hit {iterations} iterations (|g| = {gradient_norm:e})")]
    MaxIterationsExceeded {
        iterations: usize,
        gradient_norm: f64,
    },
    #[error("line search failed at iteration {iteration}")]
    LineSearchFailed { iteration: usize },
    #[error("rest lattice vectors are colinear")]
    SingularRestOffsets,
    #[error("deformed boundary normals are colinear")]
    SingularNormals,
    #[error("non-positive Jacobian det F = {0:e}")]
    NonPositiveJacobian(f64),
    #[error("{failed} of {total} solves failed")]
    TooManyFailures { failed: usize, total: usize },
    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("SQP did not converge in {iterations} iterations (KKT residual {residual:e})")]
    SqpNoConvergence { iterations: usize, residual: f64 },
    #[error("KKT matrix is singular")]
    SingularKktMatrix,
    #[error("tangent stiffness is not invertible")]
    SingularTangent,
    #[error("inner solve failed at outer iteration {iteration} (target {target}): {source}")]
    InnerFailure {
        iteration: usize,
        target: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable identifier of the error kind.
    pub fn name(&self) -> &'static str {
        match self {
            Error::ParamOutOfBounds { .. } => "ParamOutOfBounds",
            Error::ParamCount { .. } => "ParamCount",
            Error::DegenerateGeometry(_) => "DegenerateGeometry",
            Error::ElementInverted { .. } => "ElementInverted",
            Error::InterpenetrationDetected { .. } => "InterpenetrationDetected",
            Error::MaxIterationsExceeded { .. } => "MaxIterationsExceeded",
            Error::LineSearchFailed { .. } => "LineSearchFailed",
            Error::SingularRestOffsets => "SingularRestOffsets",
            Error::SingularNormals => "SingularNormals",
            Error::NonPositiveJacobian(_) => "NonPositiveJacobian",
            Error::TooManyFailures { .. } => "TooManyFailures",
            Error::NonFiniteLoss { .. } => "NonFiniteLoss",
            Error::SqpNoConvergence { .. } => "SQPNoConvergence",
            Error::SingularKktMatrix => "SingularKKTMatrix",
            Error::SingularTangent => "SingularTangent",
            Error::InnerFailure { .. } => "InnerFailure",
            Error::InvalidInput(_) => "InvalidInput",
            Error::Format(_) => "FormatError",
            Error::Io(_) => "IoError",
            Error::Json(_) => "JsonError",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
