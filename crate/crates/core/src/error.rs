use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("point outside support: {0}")]
    Domain(String),
    #[error("design failed: {0}")]
    Design(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// Short machine-readable tag, used for the CLI error line and CSV status column.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Argument(_) => "argument",
            Error::Domain(_) => "domain",
            Error::Design(_) => "design",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Error::Argument(m)
            | Error::Domain(m)
            | Error::Design(m)
            | Error::Config(m)
            | Error::Io(m) => m,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
