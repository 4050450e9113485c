use thiserror::Error;

/// Errors raised across the toolkit.
///
/// Positions and values are carried as `f64` regardless of the scalar type
/// so the error stays non-generic.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid step function: {0}")]
    InvalidStepFunction(String),
    #[error("invalid grid function: {0}")]
    InvalidGrid(String),
    #[error("cell map is not a bijection on {resolution} cells")]
    NotABijection { resolution: usize },
    #[error("function is not integrable: infinite value on [{left}, {right})")]
    NonIntegrable { left: f64, right: f64 },
    #[error("function is not in the space: {0}")]
    NotInSpace(String),
    #[error("invalid exponent: {0}")]
    InvalidExponent(String),
    #[error("exponent order violated at t = {t}: p(t) = {p} > q(t) = {q}")]
    ExponentOrder { t: f64, p: f64, q: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("seed rejected at t = {t}: {reason}")]
    SeedRejected { t: f64, reason: String },
    #[error("t-sequence selection failed after t = {t}: {reason}")]
    SequenceSelection { t: f64, reason: String },
    #[error("discretization too coarse: {0}")]
    DiscretizationTooCoarse(String),
    #[error("overlapping intervals ({0}, {1}) and ({2}, {3})")]
    OverlappingIntervals(f64, f64, f64, f64),
    #[error("block {i} needs N > e^(4^{i}), i.e. N >= {min_n}; got N = {n}")]
    BlockNormPrecondition { i: u32, n: usize, min_n: f64 },
    #[error("block intervals not aligned with pipeline windows: {0:?}")]
    UnalignedBlocks(Vec<(f64, f64)>),
    #[error("coefficient deviations never decrease: {0}")]
    NonConvergentCoefficients(String),
    #[error("verification failed: {0}")]
    Verification(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
