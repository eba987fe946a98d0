use thiserror::Error;

/// Errors produced anywhere in the crate.
///
/// Variants are grouped so the command-line front end can map them onto exit
/// codes: [`Error::is_usage`] marks configuration and validation problems.
#[derive(Debug, Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("degenerate graph: edge set is empty (K={k}, p={edge_prob})")]
    DegenerateGraph { k: usize, edge_prob: f64 },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("factorization error: {0}")]
    Factorization(String),

    #[error("infeasible budget: B={budget} is below the minimum feasible budget B_min={b_min}")]
    InfeasibleBudget { budget: f64, b_min: f64 },

    #[error("action error: {0}")]
    Action(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("ingest error{}: {msg}", row.map(|r| format!(" at row {r}")).unwrap_or_default())]
    Ingest { row: Option<usize>, msg: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn ingest(row: Option<usize>, msg: impl Into<String>) -> Self {
        Error::Ingest { row, msg: msg.into() }
    }

    /// True for errors caused by bad input rather than a runtime failure.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Validation(_)
                | Error::Config(_)
                | Error::DegenerateGraph { .. }
                | Error::InfeasibleBudget { .. }
        )
    }

    /// Short machine-parseable tag used as the stderr prefix.
    pub fn tag(&self) -> &'static str {
        match self {
            Error::Validation(_) => "validation",
            Error::DegenerateGraph { .. } => "degenerate-graph",
            Error::Numeric(_) => "numeric",
            Error::Factorization(_) => "factorization",
            Error::InfeasibleBudget { .. } => "infeasible",
            Error::Action(_) => "action",
            Error::Data(_) => "data",
            Error::Config(_) => "config",
            Error::Ingest { .. } => "ingest",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
