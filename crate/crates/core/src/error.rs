use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid collection: {0}")]
    InvalidCollection(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("no exact W2 is available between families {left} and {right}")]
    CrossFamily { left: String, right: String },

    #[error("cost matrix has {entries} entries, above the cap of {cap}")]
    CapExceeded { entries: usize, cap: usize },

    #[error("support too large for the brute-force oracle: {rows}x{cols} (max 6x6)")]
    OracleTooLarge { rows: usize, cols: usize },

    #[error("invalid distance matrix: {0}")]
    InvalidDistanceMatrix(String),

    #[error("invalid argument `{name}`: {message}")]
    InvalidArgument { name: &'static str, message: String },

    #[error("need at least {required} measures, got {found}")]
    TooFewMeasures { required: usize, found: usize },

    #[error(
        "estimated projection variance is zero ({context}); the normal approximation does not \
         apply, run the degeneracy diagnostic instead"
    )]
    DegenerateKernel { context: String },

    #[error(
        "transform `{0}` is not Lipschitz; the plug-in bound requires an L-Lipschitz transform \
         (use identity or bounded:<c0>)"
    )]
    NotLipschitz(String),

    #[error("model has no closed-form target for transform `{0}`")]
    MissingTarget(String),

    #[error("{0}")]
    UnsupportedModel(String),

    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("transport solver failed: {0}")]
    Solver(String),
}

impl Error {
    /// Errors caused by bad input rather than a bug or solver breakdown.
    pub fn is_user_error(&self) -> bool {
        !matches!(self, Error::Solver(_))
    }

    pub(crate) fn arg(name: &'static str, message: impl Into<String>) -> Self {
        Error::InvalidArgument {
            name,
            message: message.into(),
        }
    }
}
