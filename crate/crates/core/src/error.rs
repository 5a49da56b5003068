use thiserror::Error;

pub type Result<T, E = MlrError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum MlrError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("partition is not hierarchical: {0}")]
    NotRefinement(String),

    #[error("invalid permutation: {0}")]
    BadPermutation(String),

    #[error("symmetry violated: {0}")]
    SymmetryViolation(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: String, actual: String },

    #[error("requested rank {rank} exceeds min(m, n) = {max}")]
    RankTooLarge { rank: usize, max: usize },

    #[error("matrix is not symmetric (relative asymmetry {0:.3e})")]
    NotSymmetric(f64),

    #[error("iterative solver did not converge: {0}")]
    ConvergenceFailure(String),

    #[error("eigendecomposition failed: {0}")]
    EigenFailure(String),

    #[error("singular value decomposition failed: {0}")]
    SvdFailure(String),

    #[error("no positive singular value above the degeneracy threshold")]
    DegenerateSpectrum,

    #[error("input contains NaN or infinite entries")]
    NonFiniteInput,

    #[error("no feasible rank exchange")]
    NoFeasibleExchange,

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl MlrError {
    pub(crate) fn dims(expected: impl ToString, actual: impl ToString) -> Self {
        MlrError::DimensionMismatch {
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    /// True for errors caused by bad inputs or configuration rather than by
    /// numerical trouble during a computation.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            MlrError::Config(_)
                | MlrError::Format(_)
                | MlrError::Io(_)
                | MlrError::Json(_)
                | MlrError::ShapeMismatch(_)
                | MlrError::NotRefinement(_)
                | MlrError::BadPermutation(_)
                | MlrError::DimensionMismatch { .. }
                | MlrError::RankTooLarge { .. }
                | MlrError::Unsupported(_)
                | MlrError::NotSymmetric(_)
                | MlrError::SymmetryViolation(_)
                | MlrError::NonFiniteInput
        )
    }
}
