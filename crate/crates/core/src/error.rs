use thiserror::Error;

/// Errors raised by the decomposition, solver and metric routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("index {index} out of range for dimension {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("pivot breakdown at rank {rank}: Schur diagonal {value:e} below tolerance")]
    PivotBreakdown { rank: usize, value: f64 },

    #[error("strategy requires a weight vector")]
    MissingWeight,

    #[error("rank {rank} exceeds matrix dimension {dim}")]
    RankExceeded { rank: usize, dim: usize },

    #[error("singular neighbourhood covariance for candidate {index}")]
    SingularNeighborhood { index: usize },

    #[error("non-positive Schur diagonal at candidate {index}")]
    NumericalBreakdown { index: usize },

    #[error("non-finite value in CG recurrence at iteration {iteration}")]
    NumericalDivergence { iteration: usize },

    #[error("normal equations are singular")]
    SingularSystem,

    #[error("kernel assumption violated at entry ({i}, {j})")]
    AssumptionViolated { i: usize, j: usize },

    #[error("noise variance must be positive")]
    ZeroNoise,

    #[error("dense cache requested for dimension {dim} above cap {cap}")]
    CacheTooLarge { dim: usize, cap: usize },

    #[error("container format: {0}")]
    Format(String),

    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
