use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside the domain the operation accepts.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A factorization or solve failed.
    #[error("numerical failure in {context} (dimension {dim})")]
    Numerical { context: String, dim: usize },

    /// A state reached that the sampler must never silently continue from.
    #[error("invariant violated: {0}")]
    Invariant(String),

    /// Wraps an error raised at a given chain iteration.
    #[error("iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("data error: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn numerical(context: impl Into<String>, dim: usize) -> Self {
        Error::Numerical { context: context.into(), dim }
    }

    pub(crate) fn invariant(msg: impl Into<String>) -> Self {
        Error::Invariant(msg.into())
    }
}
