use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("capacity exceeded: {0}")]
    Capacity(String),
    #[error("chain structure: {0}")]
    Structure(String),
    #[error("parameter out of range: {0}")]
    Parameter(String),
    #[error("training diverged: {0}")]
    Training(String),
    #[error("misaligned inputs: {0}")]
    Alignment(String),
    #[error("out of range: {0}")]
    Range(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

impl Error {
    /// Stable machine-readable tag for the error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Usage(_) => "usage",
            Error::Capacity(_) => "capacity",
            Error::Structure(_) => "structure",
            Error::Parameter(_) => "parameter",
            Error::Training(_) => "training",
            Error::Alignment(_) => "alignment",
            Error::Range(_) => "range",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
            Error::Toml(_) => "toml",
        }
    }
}
