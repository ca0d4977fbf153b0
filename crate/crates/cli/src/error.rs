use thiserror::Error;

/// Failure categories, each with its own exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error("data: {0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 3,
            CliError::Io(_) => 4,
            CliError::Data(_) => 5,
        }
    }
}

impl From<reactive_vol::Error> for CliError {
    fn from(e: reactive_vol::Error) -> Self {
        use reactive_vol::Error as E;
        match &e {
            E::InvalidParameter { .. } => CliError::Config(e.to_string()),
            E::Io { .. } => CliError::Io(e.to_string()),
            E::Csv(inner) if inner.is_io_error() => CliError::Io(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Data(e.to_string())
    }
}
