use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("mode count mismatch: {0} vs {1}")]
    ModeCountMismatch(usize, usize),
    #[error("mode kinds differ at position {0}")]
    ModeKindMismatch(usize),
    #[error("unknown mode `{0}`")]
    UnknownMode(String),
    #[error("mode label `{0}` already present")]
    LabelCollision(String),
    #[error("mode `{0}` is a herald record and cannot be transformed")]
    HeraldMode(String),
    #[error("state has zero norm")]
    ZeroNorm,
    #[error("amplitude must be positive, got {0}")]
    NonPositiveAlpha(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("photon-number truncation leakage {leakage:.3e} exceeds {limit:.1e}")]
    Leakage { leakage: f64, limit: f64 },
    #[error("amplitude ordering violated: {0}")]
    Ordering(String),
    #[error("photon-count sampler did not converge")]
    SamplerExhausted,
}

pub type Result<T> = std::result::Result<T, Error>;
