use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HelixError {
    #[error("point ({x1}, {x2}, {x3}) lies outside the closed cylinder B1 x [0, 2pi)")]
    OutOfDomain { x1: f64, x2: f64, x3: f64 },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("field shape mismatch: expected {expected} nodes, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("unsupported norm `{0}` (expected 2, 4 or h1)")]
    UnsupportedNorm(String),

    #[error("ratio undefined for the zero field")]
    ZeroField,

    #[error("time axes differ: {0}")]
    TimeAxisMismatch(String),

    #[error("empty ledger")]
    EmptyLedger,

    #[error("poisson right-hand side is incompatible: mean {mean:e} exceeds {tol:e}")]
    IncompatibleRhs { mean: f64, tol: f64 },

    #[error("{solver} did not converge in {iterations} iterations (residual {residual:e})")]
    NotConverged {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("CFL violation: dt*max|u|/h = {cfl:.4} exceeds {limit}")]
    Cfl { cfl: f64, limit: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),

    #[error("missing required configuration key `{0}`")]
    MissingKey(String),

    #[error("configuration key `{key}`: cannot read `{value}` as {expected}")]
    MalformedValue {
        key: String,
        value: String,
        expected: &'static str,
    },

    #[error("solver self-test failed: {0}")]
    SelfTest(String),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
}

impl From<std::io::Error> for HelixError {
    fn from(e: std::io::Error) -> Self {
        HelixError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, HelixError>;
