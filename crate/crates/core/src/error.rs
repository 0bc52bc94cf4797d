use thiserror::Error;

/// Errors raised by metric, domain, curve and solver operations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The metric fails positivity or strong convexity at the evaluated point.
    #[error("metric degenerate: {0}")]
    MetricDegenerate(String),

    /// A derivative was requested on the zero section `v = 0`.
    #[error("zero section: derivatives of G are undefined at v = 0")]
    ZeroSection,

    /// p-norm jets too close to a coordinate hyperplane.
    #[error("smoothness boundary: component {component} of v is {ratio:e} of |v|")]
    SmoothnessBoundary { component: usize, ratio: f64 },

    #[error("point outside the boundary strip: |phi| = {phi} > delta0 = {delta0}")]
    OutsideStrip { phi: f64, delta0: f64 },

    #[error("boundary projection did not converge after {iterations} iterations (|phi| = {phi})")]
    ProjectionFailure { iterations: usize, phi: f64 },

    #[error("degenerate boundary: grad phi vanishes near {0:?}")]
    DegenerateBoundary(Vec<f64>),

    #[error("degenerate curve: {0}")]
    DegenerateCurve(String),

    #[error("unsupported domain: {0}")]
    UnsupportedDomain(String),

    /// `phi >= delta` at a node: the penalty is infinite there.
    #[error("penalty blowup: phi = {t} >= delta = {delta}")]
    PenaltyBlowup { t: f64, delta: f64 },

    #[error("line search stuck at the penalty barrier after {0} iterations")]
    StuckAtBarrier(usize),

    #[error("continuation stalled at stage {stage} (delta = {delta}): {reason}")]
    ContinuationStalled {
        stage: usize,
        delta: f64,
        reason: String,
    },

    #[error("velocity collapsed to {speed:e} at t = {t}")]
    ZeroSectionAbort { t: f64, speed: f64 },

    #[error("integrator failure at t = {t}: relative energy drift {drift}")]
    IntegratorFailure { t: f64, drift: f64 },

    #[error("no contact nodes in result")]
    NoContact,

    #[error("config: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Config(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
