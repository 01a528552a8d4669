use thiserror::Error;

use crate::lattice::Site;
use crate::exact_solver::Bracket;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty set")]
    EmptySet,

    #[error("budget exceeded: {what} needs {needed}, limit {limit}")]
    BudgetExceeded {
        what: &'static str,
        needed: usize,
        limit: usize,
    },

    #[error("site {0} is outside exact window of radius {1}")]
    OutsideWindow(Site, i64),

    #[error("log singularity at the origin")]
    LogSingularity,

    #[error("origin is not a state of the conditioned walk")]
    OriginNotState,

    #[error("use return_prob_hat for x = y")]
    UseReturnProb,

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("solver did not converge: residual {residual:e} after {iterations} iterations")]
    NonConvergence { residual: f64, iterations: usize },

    #[error("bracket width {width:e} above tolerance {tol:e} at radius budget {radius}")]
    BracketBudget {
        best: Bracket,
        width: f64,
        tol: f64,
        radius: f64,
    },

    #[error("quadrature did not converge: achieved {achieved:e}")]
    Quadrature { achieved: f64 },

    #[error("chain is reducible")]
    ReducibleChain,

    #[error("insufficient conditioning events: {hits} hits, need {needed}")]
    InsufficientEvents { hits: usize, needed: usize },

    #[error("walk exceeded max_steps in {failed} of {replicas} replicas")]
    StepCap { failed: usize, replicas: usize },

    #[error("rejection acceptance {0:e} below 1e-3")]
    LowAcceptance(f64),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub(crate) fn precondition(msg: impl Into<String>) -> Error {
    Error::Precondition(msg.into())
}
