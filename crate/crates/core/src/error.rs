use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid simplex: {0}")]
    InvalidSimplex(String),

    #[error("negative weight {value} at index {index}")]
    NegativeWeight { index: usize, value: f64 },

    #[error("shape mismatch: expected length {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("action {action} has zero sampling probability")]
    ZeroProbability { action: usize },

    #[error("action index {index} out of range for {len} actions")]
    ActionOutOfRange { index: usize, len: usize },

    #[error("covariance update is singular (condition estimate {condition:e})")]
    SingularCovariance { condition: f64 },

    #[error("posterior variance {0:e} is negative beyond round-off")]
    NegativeVariance(f64),

    #[error("run log is empty")]
    EmptyLog,

    #[error("run log rounds must be strictly increasing (got {got} after {prev})")]
    NonMonotoneLog { prev: usize, got: usize },

    #[error("nash solver stopped after {iterations} iterations with gap {best_gap:e}")]
    NashNotConverged { best_gap: f64, iterations: usize },

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("{what}: metadata declares {declared}, found {found}")]
    CountMismatch {
        what: &'static str,
        declared: usize,
        found: usize,
    },

    #[error("node {dest} is unreachable from node {origin}")]
    Unreachable { origin: usize, dest: usize },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn check_finite(values: &[f64], what: &'static str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::ShapeMismatch { expected, got })
    }
}
