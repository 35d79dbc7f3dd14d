use thiserror::Error;

/// Errors raised by the model, the numerics and the file formats.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A partial-fraction denominator of the marginal distribution vanishes.
    #[error("marginal term is singular: |{a} - {b}| <= {eps:e}; use the perturbed evaluation path")]
    SingularMarginal { a: f64, b: f64, eps: f64 },

    #[error("correlation matrix is not positive definite even after jitter (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("common-factor loadings are numerically degenerate (c_delta = {c_delta:e}); upper = ({upper1}, {upper2}), lower = ({lower1}, {lower2})")]
    DegenerateLoadings {
        c_delta: f64,
        upper1: f64,
        upper2: f64,
        lower1: f64,
        lower2: f64,
    },

    #[error("quadrature produced a non-finite value at abscissa {abscissa} ({context})")]
    Quadrature { abscissa: f64, context: String },

    #[error("replicate {replicate}: {source}")]
    Replicate {
        replicate: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("root not bracketed in [{lo}, {hi}]")]
    NotBracketed { lo: f64, hi: f64 },

    #[error("design matrix is rank deficient; collinear columns: {0:?}")]
    RankDeficient(Vec<String>),

    #[error("optimizer failure: {0}")]
    Optimizer(String),

    #[error("{0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Short machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid-argument",
            Error::SingularMarginal { .. } => "singular-marginal",
            Error::NotPositiveDefinite { .. } => "not-positive-definite",
            Error::DegenerateLoadings { .. } => "degenerate-loadings",
            Error::Quadrature { .. } => "quadrature",
            Error::Replicate { source, .. } => source.kind(),
            Error::NotBracketed { .. } => "not-bracketed",
            Error::RankDeficient(_) => "rank-deficient",
            Error::Optimizer(_) => "optimizer",
            Error::Format(_) => "format",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn at_replicate(self, replicate: usize) -> Self {
        Error::Replicate {
            replicate,
            source: Box::new(self),
        }
    }
}
