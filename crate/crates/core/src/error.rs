use thiserror::Error;

/// Errors produced by geometry, curvature, quadrature and verification routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid space form: {0}")]
    InvalidSpace(String),

    #[error("point is not on the upper hyperboloid sheet (residual {residual:e})")]
    NotOnHyperboloid { residual: f64 },

    #[error("vector is not tangent to the hyperboloid (residual {residual:e})")]
    NotTangent { residual: f64 },

    #[error("model consistency violated: kappa<p,q> = {value} < 1")]
    ModelConsistency { value: f64 },

    #[error("singular configuration: {0}")]
    Singularity(&'static str),

    #[error("immersion degenerates at chart point {0:?}")]
    Immersion(Vec<f64>),

    #[error("numerical derivative failed: {0}")]
    NumericalDerivative(String),

    #[error("orientation is ambiguous (tr A = {trace:e} at the chart base point); supply it explicitly")]
    AmbiguousOrientation { trace: f64 },

    #[error("unsupported surface: {0}")]
    Unsupported(String),

    #[error("missing capability: {0}")]
    Capability(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("chart index {0} out of range")]
    ChartIndex(usize),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
