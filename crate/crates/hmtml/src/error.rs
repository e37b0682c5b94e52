use thiserror::Error;

/// Errors surfaced by the hmtml crate.
#[derive(Error, Debug)]
pub enum HmtmlError {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("codebook generation failed: {0}")]
    CodebookGeneration(String),

    #[error("solver diverged ({context}); objective trace: {trace:?}")]
    SolverDivergence { context: String, trace: Vec<f64> },
}

pub type Result<T> = std::result::Result<T, HmtmlError>;

impl HmtmlError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        HmtmlError::InvalidInput(msg.into())
    }
}
