use thiserror::Error;

/// Errors raised while building or solving PDM problems.
#[derive(Debug, Error)]
pub enum PdmError {
    #[error("unknown {what} kind `{kind}`")]
    UnknownKind { what: &'static str, kind: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("mass {value:e} at ({x}, {y}) is not bounded away from zero")]
    NonPositiveMass { x: f64, y: f64, value: f64 },

    #[error("non-finite value {value} at ({x}, {y})")]
    NonFinite { x: f64, y: f64, value: f64 },

    #[error("von Roos constraint violated: alpha + beta + gamma = {sum} (must equal -1)")]
    OrderingConstraint { sum: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("operator is not Hermitian: defect {defect:e} exceeds {threshold:e}")]
    NotHermitian { defect: f64, threshold: f64 },

    #[error("eigensolver did not converge: {converged} of {requested} pairs, best residuals {best_residuals:?}")]
    NonConvergence {
        converged: usize,
        requested: usize,
        best_residuals: Vec<f64>,
    },

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("wavefunction is not normalized (norm {norm})")]
    Unnormalized { norm: f64 },
}

pub type Result<T> = std::result::Result<T, PdmError>;
