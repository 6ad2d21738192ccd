use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Core(#[from] iddm_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("io: {0}")]
    Stream(#[from] std::io::Error),
    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },
    #[error("config: {0}")]
    Invalid(String),
    #[error("fixture line {line}: {message}")]
    Fixture { line: usize, message: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("checkpoint format version {found}, expected {expected}")]
    Version { found: u32, expected: u32 },
    #[error("dimension mismatch: {0}")]
    Dims(String),
    #[error("non-finite training loss at step {step}: {loss}")]
    Diverged { step: usize, loss: f64 },
    #[error("thread pool: {0}")]
    Threads(String),
}

pub type Result<T> = std::result::Result<T, CliError>;

pub(crate) fn io_at(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}
