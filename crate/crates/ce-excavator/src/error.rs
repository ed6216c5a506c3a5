use thiserror::Error;

/// Errors raised by the library layer.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid rational map: {0}")]
    InvalidMap(String),
    #[error("indeterminate 0/0 while evaluating at {0}")]
    Indeterminate(String),
    #[error("root finder did not converge (residual {residual:e})")]
    RootFinding { residual: f64 },
    #[error("parameter {a:e} outside the family radius {epsilon:e}")]
    ParamOutOfRange { a: f64, epsilon: f64 },
    #[error("degree drop at a = {a:e}: {detail}")]
    DegreeDrop { a: f64, detail: String },
    #[error("invalid family: {0}")]
    InvalidFamily(String),
    #[error("critical index {0} out of range")]
    CriticalIndex(usize),
    #[error("precision exhausted at step {step} (certified horizon {horizon})")]
    PrecisionExhausted { step: usize, horizon: usize },
    #[error("derivative vanishes at step {step}: the orbit hits a critical point")]
    DerivativeUnderflow { step: usize },
    #[error("partner orbit too short: need {needed} points, have {available}")]
    PartnerTooShort { needed: usize, available: usize },
    #[error("U too large for horizon: no sampled point stays outside U for {n} steps")]
    NoOutsideSamples { n: usize },
    #[error("family not numerically CE at base: {0}")]
    NotCollectEckmann(String),
    #[error("constants invariant violated: {0}")]
    Constants(String),
    #[error("start phase for critical point {l}: epsilon too large or family too tame (no growth within {horizon} steps)")]
    StartPhaseHorizon { l: usize, horizon: usize },
    #[error("scale inversion in star upgrade: element of length {fine:e} overlaps deleted element of length {coarse:e}")]
    ScaleInversion { fine: f64, coarse: f64 },
    #[error("invariant violation: {0}")]
    Invariant(String),
    #[error("window {index}: {source}")]
    InWindow { index: usize, source: Box<Error> },
}

impl Error {
    /// The error with any window context stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::InWindow { source, .. } => source.root(),
            e => e,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
