use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("degenerate seed: norm {norm:e} below {floor:e}")]
    DegenerateSeed { norm: f64, floor: f64 },

    #[error("memory estimate {needed_mb:.1} MB exceeds budget {budget_mb:.1} MB ({what})")]
    Resource {
        what: String,
        needed_mb: f64,
        budget_mb: f64,
    },

    #[error("missing state: {0}")]
    State(String),

    #[error("out of range: {0}")]
    Range(String),

    #[error("numeric failure in {context}: estimate {estimate:e}, error bound {bound:e}")]
    Numeric {
        context: String,
        estimate: f64,
        bound: f64,
    },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn range(msg: impl Into<String>) -> Self {
        Error::Range(msg.into())
    }
}
