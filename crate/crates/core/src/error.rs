use thiserror::Error;

/// Errors raised across the surveillance engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("uninformative likelihood profile for outcome `{0}`")]
    UninformativeProfile(String),

    #[error("log-likelihood is not concave around the maximum of outcome `{0}`")]
    Curvature(String),

    #[error("need at least {needed} usable negative controls, got {found}")]
    InsufficientControls { needed: usize, found: usize },

    #[error("error model fit failed: {0}")]
    Fit(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("i/o error: {0}")]
    Io(String),

    #[error("{context}: {source}")]
    Context { context: String, source: Box<Error> },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn with_context(self, context: &str) -> Self {
        Error::Context {
            context: context.to_string(),
            source: Box::new(self),
        }
    }

    /// True for failures caused by the numerics rather than malformed input.
    pub fn is_numerical(&self) -> bool {
        if let Error::Context { source, .. } = self {
            return source.is_numerical();
        }
        matches!(
            self,
            Error::Curvature(_)
                | Error::Fit(_)
                | Error::InsufficientControls { .. }
                | Error::UninformativeProfile(_)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
