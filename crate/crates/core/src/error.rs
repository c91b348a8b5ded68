use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("sample index {index} out of range for a family of {size} constraints")]
    SampleOutOfRange { index: usize, size: usize },

    #[error("sample does not belong to this family's sample space")]
    ForeignSample,

    #[error("invalid constraint: {0}")]
    InvalidConstraint(String),

    #[error("invalid parameter `{name}`: {detail}")]
    InvalidParameter { name: &'static str, detail: String },

    /// The selected constraint is positive at a point where its subgradient
    /// vanishes, so the constraint has a positive minimum and the feasible
    /// set is empty.
    #[error("infeasible constraint: value {value} > 0 with zero subgradient")]
    InfeasibleConstraint { value: f64 },

    #[error("operation requires a finite sample space")]
    NotFinite,

    #[error("x\u{2080} already achieves the goal: eps {eps} >= M * dist0 = {budget}")]
    AlreadyAchieved { eps: f64, budget: f64 },

    #[error("no exterior points found after {attempts} attempts")]
    NoExteriorPoints { attempts: usize },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, detail: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        detail: detail.into(),
    }
}
