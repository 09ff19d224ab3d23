use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid boundary data: {0}")]
    InvalidBoundary(String),

    #[error("dimension mismatch: expected {expected} values, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value {0}")]
    NonFinite(String),

    #[error("flux is not differentiable here (eps = 0 with p != 2)")]
    NonDifferentiable,

    #[error("singular pivot {pivot:e} at elimination step {step}")]
    SingularLinearSolve { step: usize, pivot: f64 },

    #[error("Newton did not converge: {reason} (best residual {best_residual:e})")]
    NonConvergence {
        reason: String,
        best_residual: f64,
        best: Box<crate::solver::Stage>,
    },

    #[error("continuation stage {stage} failed: {source}")]
    Stage {
        stage: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("region leaves the domain: {0}")]
    OutsideDomain(String),

    #[error("oracle data infeasible: {0}")]
    Infeasible(String),

    #[error("too few usable radii: {found} (need at least {needed})")]
    TooFewRadii { found: usize, needed: usize },

    #[error("ball too small: {0}")]
    BallTooSmall(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("configuration invalid:\n  - {}", .0.join("\n  - "))]
    Config(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
