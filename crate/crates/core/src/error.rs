use thiserror::Error;

/// Errors raised across the simulation suite.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension too small: d = {0}, need d >= 2")]
    DimensionTooSmall(usize),
    #[error("alpha out of range: alpha = {alpha} not in (1/2, {upper}]")]
    AlphaOutOfRange { alpha: f64, upper: f64 },
    #[error("s out of range: s = {s} not in ({lower}, 0)")]
    SOutOfRange { s: f64, lower: f64 },
    #[error("critical alpha = (d+2)/4: the decay ladder does not apply")]
    CriticalAlpha,
    #[error("unsupported grid: {0}")]
    InvalidGrid(String),
    #[error("size mismatch: expected {expected}, got {got}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("negative-order homogeneous norm requested on a field with nonzero mean")]
    NonzeroMean,
    #[error("negative time {0}")]
    NegativeTime(f64),
    #[error("time window [{lo}, {hi}] outside the resolved range [{min}, {max}]")]
    WindowOutsideResolved { lo: f64, hi: f64, min: f64, max: f64 },
    #[error("temporal weight not integrable at t = 0 (rho = {rho}, exponent = {exponent})")]
    WeightNotIntegrable { rho: f64, exponent: f64 },
    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),
    #[error("norm hypothesis violated: {0}")]
    HypothesisViolation(String),
    #[error("trajectory node times do not match")]
    NodeMismatch,
    #[error("Picard iteration diverged after {iterations} iterations (||h||_Y = {h_norm:.6e}); shrink tau")]
    PicardDiverged { iterations: usize, h_norm: f64 },
    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },
    #[error("overlap interval not sampled by both trajectories")]
    OverlapNotSampled,
    #[error("fit window [{lo}, {hi}] holds {count} points, need at least {need}")]
    EmptyWindow { lo: f64, hi: f64, count: usize, need: usize },
    #[error("non-positive value {value} at t = {t} in a log-log fit")]
    NonPositiveValue { t: f64, value: f64 },
    #[error("probe trajectories are identical; ratio undefined")]
    IdenticalProbes,
    #[error("field is not divergence-free (residual {0:.3e})")]
    NotDivergenceFree(f64),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("corrupt checkpoint: {0}")]
    Checkpoint(String),
    #[error("checkpoint header does not match configuration: {0}")]
    HeaderMismatch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
