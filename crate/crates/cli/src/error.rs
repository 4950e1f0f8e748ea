use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) | CliError::Io { .. } => 3,
        }
    }
}

impl From<jcfb::Error> for CliError {
    fn from(e: jcfb::Error) -> Self {
        match e {
            jcfb::Error::Validation(m) => CliError::Config(m),
            other => CliError::Numerical(other.to_string()),
        }
    }
}
