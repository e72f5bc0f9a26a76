use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MfgError {
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid model parameter: {0}")]
    InvalidParameter(String),

    #[error("point is not on the network: edge {edge}, arclength {arclength}")]
    InvalidCoordinate { edge: usize, arclength: f64 },

    #[error("time {t} outside of [{start}, {end}]")]
    OutOfRange { t: f64, start: f64, end: f64 },

    #[error("support of size {0} exceeds the exact transport oracle limit of {1}")]
    OracleScale(usize, usize),

    #[error("direction is not unit-norm (|u| = {0})")]
    NonUnitDirection(f64),

    #[error("horizon {horizon} reached before {what}")]
    Horizon { horizon: f64, what: String },

    #[error("restart too close to the boundary: {0}")]
    BoundaryProximity(String),

    #[error("bisection bracket inconsistency: {0}")]
    Inconsistent(String),

    #[error("degenerate measure update: {0}")]
    DegenerateUpdate(String),

    #[error("symmetry check failed: {0}")]
    Symmetry(String),

    #[error("fixed point did not converge at {context}: best spread {best_spread} after {iters} iterations")]
    NonConvergence {
        context: String,
        best_spread: f64,
        iters: usize,
    },
}

pub type Result<T> = std::result::Result<T, MfgError>;
