use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected (n={n}, m={m}), got (n={got_n}, m={got_m})")]
    DimensionMismatch {
        n: usize,
        m: usize,
        got_n: usize,
        got_m: usize,
    },

    #[error("state space needs n + m >= 1")]
    EmptyStateSpace,

    #[error("matrix is singular or ill-conditioned (reciprocal condition {rcond:.3e}){context}")]
    Singular { rcond: f64, context: String },

    #[error("model `{model}` lacks {what}")]
    MissingComponent { model: String, what: &'static str },

    #[error("decomposition disagrees with a = sigma sigma^T / 2 by {deviation:.3e} at {point}")]
    InconsistentDecomposition { deviation: f64, point: String },

    #[error("empty sample set for {0}")]
    EmptySamples(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("infeasible parameters: {0}")]
    Infeasible(String),

    #[error("non-finite state on path {path} at step {step}")]
    NonFinite { path: usize, step: usize },

    #[error("path {path}, step {step}: {source}")]
    AtStep {
        path: usize,
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("estimation impossible: {0}")]
    EstimationImpossible(String),

    #[error("degenerate sample: {0}")]
    Degenerate(String),

    #[error("duplicate sample points at distance 0 with differing values ({0} vs {1})")]
    DuplicatePoints(f64, f64),

    #[error("bundle lacks {0}")]
    BundleShape(&'static str),

    #[error("unknown {kind} `{name}`")]
    Unknown { kind: &'static str, name: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn at_step(self, path: usize, step: usize) -> Self {
        match self {
            e @ (Error::NonFinite { .. } | Error::AtStep { .. }) => e,
            e => Error::AtStep {
                path,
                step,
                source: Box::new(e),
            },
        }
    }
}
