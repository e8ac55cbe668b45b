use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Schema or semantic problem, located by a JSON pointer into the config.
    #[error("config error at {pointer}: {message}")]
    Config { pointer: String, message: String },
    #[error("{0}")]
    Guard(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn config(pointer: impl Into<String>, message: impl Into<String>) -> Self {
        let pointer = pointer.into();
        CliError::Config { pointer: if pointer.is_empty() { "/".into() } else { pointer }, message: message.into() }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        CliError::Runtime(message.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Guard(_) => 3,
            CliError::Runtime(_) => 4,
        }
    }

    /// Library errors raised while checking a config; guards keep their own code.
    pub fn from_core_at(pointer: &str, e: corerad::Error) -> Self {
        match e {
            corerad::Error::Guard(_) => CliError::Guard(e.to_string()),
            corerad::Error::InvalidParameter(m) | corerad::Error::Domain(m) | corerad::Error::Unsupported(m) => CliError::config(pointer, m),
            other => CliError::config(pointer, other.to_string()),
        }
    }
}

impl From<corerad::Error> for CliError {
    fn from(e: corerad::Error) -> Self {
        match e {
            corerad::Error::Guard(_) => CliError::Guard(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(format!("i/o: {e}"))
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Runtime(format!("csv: {e}"))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Runtime(format!("json: {e}"))
    }
}
