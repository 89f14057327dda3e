use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid structure: {0}")]
    Validation(String),

    #[error("point {0:?} lies outside the world box")]
    OutsideWorld([f64; 3]),

    #[error("point {point:?} lies inside conductor {id}")]
    InsideConductor { point: [f64; 3], id: u32 },

    #[error("transition cube intersects conductor {0}")]
    CubeHitsConductor(u32),

    #[error("lattice has no interior nodes")]
    NoInteriorNodes,

    #[error("expanded cube centre is engulfed by conductors; fall back to plain MicroWalk")]
    EngulfedCentre,

    #[error("linear solve did not converge (relative residual {residual:.3e} after {iterations} iterations)")]
    NotConverged { residual: f64, iterations: usize },

    #[error("system too large for the direct fallback ({0} band entries)")]
    TooLarge(usize),

    #[error("micro walk exceeded the safety cap of {0} steps")]
    StepCap(u64),

    #[error("profile is not stratified; dispatch to MicroWalk instead")]
    NotStratified,

    #[error("lattice size {n} exceeds the dense-oracle cap {cap}")]
    OracleCap { n: usize, cap: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("cache file: {0}")]
    CacheFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
