use thiserror::Error;

/// Errors raised by the numerical stages.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("point left the band [{lo}, {hi}]: I = {action}")]
    OutOfBand { action: f64, lo: f64, hi: f64 },
    #[error("spectral gap violated: alpha^2 lambda = {product}")]
    GapViolation { product: f64 },
    #[error("orbit escaped the channel after {iterations} iterates (distance {distance:e})")]
    EscapedChannel { iterations: usize, distance: f64 },
    #[error("not found: {0}")]
    NotFound(String),
    #[error("continuation failed at node ({phi}, {action}): {reason}")]
    ContinuationFailed {
        phi: f64,
        action: f64,
        reason: String,
    },
    #[error("domain exceeded at ({phi}, {action})")]
    DomainExceeded { phi: f64, action: f64 },
    #[error("found {found} of {requested} secondary cylinders")]
    FewerFound { found: usize, requested: usize },
    #[error("envelope reached the top of the band at phi = {phi}")]
    BandOverflow { phi: f64 },
    #[error("generation limit {0} reached without a decision")]
    GenerationLimit(usize),
    #[error("padding failed at block {0}")]
    PaddingFailed(usize),
    #[error("shooting failed at excursion {excursion}: {reason}")]
    ShootingFailed { excursion: usize, reason: String },
    #[error("shadowing bound violated: deviation {deviation:e} > 2 x {bound:e}")]
    BoundViolated { deviation: f64, bound: f64 },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
