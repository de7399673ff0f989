use thiserror::Error;

/// Errors raised anywhere in the workbench.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("oracle mode mismatch: attack needs {needed} labels, oracle serves {served}")]
    ModeMismatch { needed: &'static str, served: &'static str },
    #[error("no adversarial initialization found within {0} queries")]
    InitNotFound(u64),
    #[error("unknown attack family `{0}`")]
    UnknownFamily(String),
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("target {target} outside the achievable range [{lo}, {hi}]")]
    OutOfRange { target: f64, lo: f64, hi: f64 },
    #[error("calibration failed: undefended ASR {asr:.3} is below 0.9")]
    CalibrationFailed { asr: f64 },
    #[error("config error at `{path}`: {msg}")]
    Config { path: String, msg: String },
    #[error("io error: {0}")]
    Io(String),
    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Wraps the error with a description of where it happened.
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error, with all context layers removed.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }

    /// True for failures of the experiment itself rather than of its inputs.
    pub fn is_domain(&self) -> bool {
        matches!(self.root(), Error::CalibrationFailed { .. } | Error::InitNotFound(_))
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
