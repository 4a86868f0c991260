use thiserror::Error;

/// Errors raised by mesh generation, assembly, constitutive evaluation and the solvers.
#[derive(Debug, Error)]
pub enum FemError {
    #[error("invalid element: {0}")]
    InvalidElement(String),

    #[error("degenerate element {element}: det J = {det:e} at quadrature point {point}")]
    DegenerateElement { element: usize, point: usize, det: f64 },

    #[error("sparse construction error: {0}")]
    Construction(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("linear solver failed (relative residual {residual:e}): {reason}")]
    SolverFailure { residual: f64, reason: String },

    #[error("Newton iteration did not converge in {iterations} iterations (last criterion {criterion:e})")]
    NonConvergence { iterations: usize, criterion: f64 },

    #[error("invalid material parameter: {0}")]
    InvalidMaterial(String),

    #[error("internal consistency error: {0}")]
    InternalConsistency(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("mesh format error: {0}")]
    MeshFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, FemError>;
