use thiserror::Error;

/// Failure of a command, carrying its process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }
}

impl From<nexdenoise::Error> for CliError {
    fn from(e: nexdenoise::Error) -> Self {
        use nexdenoise::Error as E;
        match e {
            E::InvalidArgument(_) => CliError::Usage(e.to_string()),
            E::NonFinite(_) | E::DegenerateSamples(_) => CliError::Numerical(e.to_string()),
            E::Shape(_) | E::Data(_) | E::Io(_) | E::Json(_) => CliError::Data(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
