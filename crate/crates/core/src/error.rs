use thiserror::Error;

/// Errors raised by graph learning, kernel construction and dataset handling.
#[derive(Debug, Error)]
pub enum SglError {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("singular harmonic system: unlabeled component {component:?} has no labeled sample")]
    SingularSystem { component: Vec<usize> },

    #[error("format error at line {line}: {message}")]
    Format { line: u64, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl SglError {
    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            SglError::Config(_) => 2,
            SglError::Numerical(_)
            | SglError::SingularSystem { .. }
            | SglError::DegenerateData(_) => 3,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, SglError>;
