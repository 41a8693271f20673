use thiserror::Error;

/// Errors produced by the simulation, learning and oracle routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: String,
        found: String,
    },

    #[error("(A_hat, C) is not observable: observability rank {rank} < {n}")]
    NotObservable { rank: usize, n: usize },

    #[error("(A_hat, B_hat) is not stabilizable: unstable mode {mode} is uncontrollable")]
    NotStabilizable { mode: String },

    #[error("integration diverged at t = {t} s")]
    IntegrationDiverged { t: f64 },

    #[error("{0}")]
    Domain(String),

    #[error("error stack not ready: {fill} of {depth} samples received")]
    NotReady { fill: usize, depth: usize },

    #[error("kernel block S_uu is singular (|det| = {det:e} < {eps:e})")]
    SingularKernel { det: f64, eps: f64 },

    #[error("utility samples are not strictly increasing in time at index {index}")]
    UnorderedSamples { index: usize },

    #[error("Riccati iteration did not converge after {iterations} iterations (last step {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("regressor matrix is under-excited: rank {rank} of {required} required")]
    UnderExcited { rank: usize, required: usize },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("invalid config value for `{key}`: {message}")]
    Config { key: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dims(what: &'static str, expected: impl ToString, found: impl ToString) -> Self {
        Error::DimensionMismatch {
            what,
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}
