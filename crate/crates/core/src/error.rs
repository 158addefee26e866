use std::path::PathBuf;

/// Errors produced by the estimation library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("estimator identically zero beyond k: p = {p} exceeds sketch width k = {k}")]
    OrderExceedsWidth { p: usize, k: usize },

    #[error("combinatorial budget exceeded: {count} cycles to enumerate (limit {limit})")]
    BudgetExceeded { count: f64, limit: u64 },

    #[error("cannot parse spectrum `{spec}`: {reason}")]
    SpectrumSyntax { spec: String, reason: String },

    #[error("invalid experiment config: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
