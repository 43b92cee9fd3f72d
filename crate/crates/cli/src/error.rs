use thiserror::Error;

/// Process exit codes.
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] heatgraph::Error),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Core(e) if e.is_numerical() => EXIT_NUMERICAL,
            CliError::Core(e) if e.is_io() => EXIT_IO,
            // bad values and shapes in the inputs
            CliError::Core(_) => EXIT_CONFIG,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
