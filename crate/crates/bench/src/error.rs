use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numerical failure: {0}")]
    Numerical(pivchol::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl BenchError {
    /// Process exit status for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Config(_) => 2,
            BenchError::Data(_) => 3,
            BenchError::Numerical(_) => 4,
            BenchError::Io(_) | BenchError::Csv(_) => 1,
        }
    }
}

impl From<pivchol::Error> for BenchError {
    fn from(e: pivchol::Error) -> Self {
        use pivchol::Error as E;
        match e {
            E::InvalidConfig(msg) => BenchError::Config(msg),
            E::InvalidData(msg) => BenchError::Data(msg),
            E::CacheTooLarge { .. } | E::RankExceeded { .. } | E::MissingWeight => BenchError::Config(e.to_string()),
            E::Io(msg) => BenchError::Io(std::io::Error::other(msg)),
            other => BenchError::Numerical(other),
        }
    }
}

pub type Result<T> = std::result::Result<T, BenchError>;
