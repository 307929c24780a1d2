use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid patch graph: {0}")]
    InvalidGraph(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid environment: {0}")]
    InvalidEnvironment(String),

    #[error("singular linear system ({0})")]
    Singular(&'static str),

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("series diverges: {0}")]
    Divergent(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("all replicates went extinct")]
    AllExtinct,

    #[error("internal inconsistency: {0}")]
    Inconsistent(String),

    #[error("invalid document: {0}")]
    Document(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
