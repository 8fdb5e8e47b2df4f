use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration field or combination of fields is invalid.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    /// An operation was called outside its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),
    /// Even the minimum-power solution exceeds the power budget.
    #[error("infeasible budget: minimum total power {needed_w} W exceeds P_max {p_max_w} W")]
    InfeasibleBudget { needed_w: f64, p_max_w: f64 },
    /// A combinatorial problem size exceeds the exhaustive-search guard rails.
    #[error("guard rail exceeded: {0}")]
    GuardRail(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed file: {0}")]
    Format(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
