use thiserror::Error;

pub type Result<T> = std::result::Result<T, MfgError>;

#[derive(Debug, Error)]
pub enum MfgError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("unequal particle counts: {0} vs {1}")]
    UnequalCounts(usize, usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("time {0} outside [0, {1}]")]
    OutsideHorizon(f64, f64),

    #[error("mismatched time grids")]
    GridMismatch,

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("diffusion matrix not symmetric positive semidefinite at a sampled input")]
    NonPsdDiffusion,

    #[error("explicit scheme unstable: dt*(sum G_ii/h^2 + sum lambda) = {0:.3} > {1}")]
    StabilityViolation(f64, f64),

    #[error("jump thinning too coarse: lambda*dt = {0:.3} > 0.5")]
    StepTooCoarse(f64),

    #[error("growth audit failed: {0}")]
    GrowthAudit(String),

    #[error("unsupported test function for this operation")]
    UnsupportedTestFunction,

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}
