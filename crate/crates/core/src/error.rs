use thiserror::Error;

/// Errors raised across the toolkit.
///
/// The variants follow the split used by the command-line driver: input,
/// configuration and parse problems are caller mistakes, while numerical,
/// specification and diagnostic failures come out of the computation itself.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("infeasible specification: {0}")]
    Specification(String),

    #[error("sampler diagnostic: {0}")]
    Diagnostic(String),

    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub fn parse(path: impl AsRef<std::path::Path>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.as_ref().display().to_string(),
            message: message.into(),
        }
    }

    /// Short machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Input(_) => "input",
            Error::Domain(_) => "domain",
            Error::Config(_) => "config",
            Error::Numerical(_) => "numerical",
            Error::Specification(_) => "specification",
            Error::Diagnostic(_) => "diagnostic",
            Error::Parse { .. } => "parse",
            Error::Io { .. } => "io",
        }
    }

    /// True for errors caused by bad inputs or configuration rather than by
    /// the numerics.
    pub fn is_user_error(&self) -> bool {
        matches!(
            self,
            Error::Input(_) | Error::Config(_) | Error::Parse { .. } | Error::Io { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
