use std::path::PathBuf;

/// Errors raised across the crate.
///
/// Every variant maps to a stable machine-readable code (see [`Error::code`])
/// which the command-line front end prints on failure.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("non-finite gradient in parameter `{0}`")]
    NonFinite(String),

    #[error("training diverged at step {step}: loss {loss} exceeded 10x initial loss {initial} for {window} consecutive steps")]
    Diverged {
        step: usize,
        loss: f64,
        initial: f64,
        window: usize,
    },

    #[error("malformed file {path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn code(&self) -> &'static str {
        match self {
            Error::Shape { .. } => "E_SHAPE",
            Error::Contract(_) => "E_CONTRACT",
            Error::Input(_) => "E_INPUT",
            Error::Config(_) => "E_CONFIG",
            Error::NonFinite(_) => "E_NONFINITE",
            Error::Diverged { .. } => "E_DIVERGED",
            Error::Format { .. } => "E_FORMAT",
            Error::Io { .. } => "E_IO",
        }
    }

    pub(crate) fn shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::Shape {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
