use thiserror::Error;

pub const EXIT_INTERNAL: u8 = 1;
pub const EXIT_USER: u8 = 2;

#[derive(Debug, Error)]
#[error("{message}")]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn user(message: impl Into<String>) -> Self {
        Self { code: EXIT_USER, message: message.into() }
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self { code: EXIT_INTERNAL, message: message.into() }
    }
}

impl From<reachcert::Error> for CliError {
    fn from(e: reachcert::Error) -> Self {
        use reachcert::Error as E;
        let code = match &e {
            E::InvalidArgument(_) | E::Config(_) | E::Format(_) | E::Json(_) => EXIT_USER,
            E::InferenceFailure(_) | E::Io(_) => EXIT_INTERNAL,
        };
        Self { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::internal(e.to_string())
    }
}
