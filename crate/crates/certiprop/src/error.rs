use std::path::Path;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Validation(#[from] certiprop_core::Error),
    #[error("{what}: line {line}, column {column}: {message}")]
    Parse { what: String, line: usize, column: usize, message: String },
    #[error("{what}: {message}")]
    Format { what: String, message: String },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0} soundness violation(s) found")]
    Soundness(usize),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.display().to_string(), source }
    }

    /// Process exit status: 2 usage, 3 invalid input, 4 soundness violation.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Soundness(_) => 4,
            _ => 3,
        }
    }
}
