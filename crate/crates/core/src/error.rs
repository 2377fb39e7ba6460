use thiserror::Error;

pub type Result<T> = std::result::Result<T, R2rError>;

#[derive(Debug, Error)]
pub enum R2rError {
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("period {t} outside horizon 1..={horizon} (next allowed period {next})")]
    Horizon {
        t: usize,
        horizon: usize,
        next: usize,
    },

    #[error("singular design: {deficient} of {columns} columns are linearly dependent")]
    Singular { deficient: usize, columns: usize },

    #[error("degenerate design: {0}")]
    DegenerateDesign(String),

    #[error("parameter not identifiable: {0}")]
    Unidentifiable(String),

    #[error("invalid parameter `{key}`: {reason}")]
    InvalidParameter { key: String, reason: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("policy gradient iterates diverged at period {t} after {halvings} step halvings")]
    Divergence { t: usize, halvings: usize },

    #[error("error ratio undefined: target coordinate {index} is zero")]
    UndefinedRatio { index: usize },

    #[error("degenerate ratio distribution: |rho| = 1")]
    DegenerateDistribution,

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl R2rError {
    pub(crate) fn invalid(key: impl Into<String>, reason: impl Into<String>) -> Self {
        R2rError::InvalidParameter {
            key: key.into(),
            reason: reason.into(),
        }
    }

    /// True for errors caused by bad configuration rather than runtime failure.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            R2rError::Config(_)
                | R2rError::InvalidParameter { .. }
                | R2rError::Dimension { .. }
                | R2rError::Json(_)
        )
    }
}
