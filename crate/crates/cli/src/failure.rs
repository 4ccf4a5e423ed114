use saa_core::Error;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_BACKEND: i32 = 3;

/// A command failure, classified by exit code.
#[derive(Debug, thiserror::Error)]
pub enum Failure {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Backend(String),
}

impl Failure {
    pub fn config(msg: impl Into<String>) -> Self {
        Failure::Config(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => EXIT_CONFIG,
            Failure::Backend(_) => EXIT_BACKEND,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_backend() {
            Failure::Backend(e.to_string())
        } else {
            Failure::Config(e.to_string())
        }
    }
}

pub type CliResult<T> = std::result::Result<T, Failure>;
