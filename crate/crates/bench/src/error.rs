use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("config: {0}")]
    Config(String),
    #[error("signal generation: {0}")]
    Signal(String),
    #[error(transparent)]
    Core(#[from] gmemi_core::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, BenchError>;
