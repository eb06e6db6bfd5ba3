use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} must not be empty")]
    Empty { what: &'static str },

    #[error("invalid {name} = {value}: {constraint}")]
    Domain {
        name: &'static str,
        value: f64,
        constraint: &'static str,
    },

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("price {price} violates the no-arbitrage {side} bound {bound}")]
    NoArbitrage {
        price: f64,
        bound: f64,
        side: &'static str,
    },

    #[error("{what} did not converge after {iterations} iterations")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
    },

    #[error("non-finite {what} at {context}")]
    NonFinite { what: &'static str, context: String },

    #[error("path expansion would enumerate {paths} affine pieces (guard: {guard})")]
    PathBudget { paths: u128, guard: u128 },

    #[error(
        "sandwich bound violated at x = {x:?}: surrogate {surrogate}, forward {forward}, slack cap {cap}"
    )]
    BoundViolation {
        x: Vec<f64>,
        surrogate: f64,
        forward: f64,
        cap: f64,
    },

    #[error("insufficient data: {what} needs at least {required}, got {got}")]
    InsufficientData {
        what: &'static str,
        required: usize,
        got: usize,
    },

    #[error("grid mismatch: {why}")]
    GridMismatch { why: &'static str },

    #[error("checkpoint parse error at line {line}: {why}")]
    CheckpointParse { line: usize, why: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
