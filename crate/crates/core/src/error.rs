use thiserror::Error;

/// Errors shared across the pipeline modules.
#[derive(Debug, Error)]
pub enum Error {
    #[error("insufficient-history: need at least 2 states at or before frame {frame}")]
    InsufficientHistory { frame: u64 },
    #[error("infeasible-point: simplex constraint violated by {violation}")]
    InfeasiblePoint { violation: f64 },
    #[error("oracle-too-large: {vertices} vertices exceeds the exhaustive-search guard of {max}")]
    OracleTooLarge { vertices: usize, max: usize },
    #[error("no-ground-truth: ground truth track set is empty")]
    NoGroundTruth,
    #[error("no aligned label samples to score")]
    NoSamples,
    #[error("duplicate agent id {0} in scenario")]
    DuplicateAgent(u64),
    #[error("malformed input at line {line}: {reason}")]
    MalformedInput { line: usize, reason: String },
    #[error("out-of-order frame {frame} at line {line}")]
    OutOfOrderFrame { frame: u64, line: usize },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
