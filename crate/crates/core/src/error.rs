use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no root of the multiplier equation in [{lo:e}, {hi:e}] (residual at best point {residual:e})")]
    NoRoot { lo: f64, hi: f64, residual: f64 },

    #[error("bound inapplicable: {0}")]
    BoundInapplicable(String),

    #[error("training diverged at epoch {epoch} (loss = {loss})")]
    Divergence { epoch: usize, loss: f64 },

    #[error("fold invariant violated: {0}")]
    FoldInvariant(String),

    #[error("kernel matrix is not positive definite (condition estimate {condition:e})")]
    SingularKernel { condition: f64 },

    #[error("precision undefined: no example was flagged")]
    UndefinedPrecision,

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// True for errors caused by bad input or configuration, as opposed to a
    /// numerical failure during a computation.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidArgument(_)
                | Error::BoundInapplicable(_)
                | Error::FoldInvariant(_)
                | Error::Io { .. }
                | Error::Json(_)
                | Error::Csv(_)
        )
    }
}
