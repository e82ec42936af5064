use thiserror::Error;

/// Failures surfaced by the solvers and the CLI plumbing.
#[derive(Debug, Error)]
pub enum IsacError {
    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    /// The CRB threshold lies below the smallest CRB achievable with the power budget.
    #[error("infeasible: threshold {gamma} below minimum achievable CRB {crb_min}")]
    Infeasible { gamma: f64, crb_min: f64 },

    #[error("scheme not applicable: {0}")]
    NotApplicable(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io { path: std::path::PathBuf, source: std::io::Error },
}

pub type Result<T> = std::result::Result<T, IsacError>;
