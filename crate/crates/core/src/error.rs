use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors surfaced by the exact geometry, sampling and operator layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{0} is not a prime ≥ 2")]
    InvalidPrime(u32),
    #[error("mixed prime contexts: {left} vs {right}")]
    PrimeMismatch { left: u32, right: u32 },
    #[error("affine scale coefficient must be nonzero")]
    ZeroScale,
    #[error("region is empty")]
    EmptyRegion,
    #[error("invalid region: {0}")]
    InvalidRegion(String),
    #[error("inconsistent piece assignment: {0}")]
    InconsistentPieces(String),
    #[error("operation requires default value 0, found nonzero default")]
    NonzeroDefault,
    #[error("value must be nonnegative: {0}")]
    NegativeValue(String),
    #[error("element is not a certified bijection of the base field")]
    NonBijectiveElement,
    #[error("no objects with bounded support were supplied")]
    EmptyScenario,
    #[error("expectation has no exact closed form: {0}")]
    NotInExactClass(String),
    #[error("membership query at level {requested} is finer than sampled resolution {resolution}")]
    ResolutionTooCoarse { requested: i64, resolution: i64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid_input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
