use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("parity violation: {0}")]
    Parity(String),
    #[error("not integrable against PV kernel: {0}")]
    NotDecaying(String),
    #[error("not in L2_phi: {0}")]
    NotInWeightedSpace(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("admissibility violated: {0}")]
    Admissibility(String),
    #[error("newton continuation failed at a = {a}: last residual {residual:e}")]
    NewtonDivergence { a: f64, residual: f64 },
    #[error("past blowup: t = {t} >= T = {blowup}")]
    PastBlowup { t: f64, blowup: f64 },
    #[error("blowup reached in physical variables at t = {0}")]
    BlowupReached(f64),
    #[error("constraint blow-off: projection size {0:e} exceeds limit")]
    ConstraintBlowOff(f64),
    #[error("bound violation at X = {x}, Y = {y}: margin {margin:e}")]
    BoundViolation { x: f64, y: f64, margin: f64 },
    #[error("config error at `{path}`: {msg}")]
    Config { path: String, msg: String },
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
