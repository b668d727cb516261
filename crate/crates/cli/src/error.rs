use std::path::PathBuf;

use ou_timing_core::Error as ModelError;

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_SOLVER: i32 = 2;
pub const EXIT_VERIFY: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}, line {line}: {message}", path.display())]
    Parse { path: PathBuf, line: u64, message: String },
    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },
    #[error("config: {0}")]
    Config(String),
    #[error("{0}")]
    Model(#[from] ModelError),
    #[error("{failed} verification check(s) failed")]
    Verification { failed: usize },
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } | CliError::Parse { .. } | CliError::Format { .. } | CliError::Config(_) => EXIT_INPUT,
            CliError::Model(e) => match e {
                ModelError::InvalidParameter { .. }
                | ModelError::Alignment { .. }
                | ModelError::Unsorted { .. }
                | ModelError::NonUniform { .. }
                | ModelError::InsufficientData { .. } => EXIT_INPUT,
                _ => EXIT_SOLVER,
            },
            CliError::Verification { .. } => EXIT_VERIFY,
        }
    }

    /// Short machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self.exit_code() {
            EXIT_INPUT => "input",
            EXIT_SOLVER => "solver",
            _ => "verification",
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
