use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("invalid field: {0}")]
    InvalidField(String),
    #[error("interface leaves the admissible band: max |f| = {max_abs} > {limit}")]
    GapViolation { max_abs: f64, limit: f64 },
    #[error("coordinate map is degenerate: min jacobian {min_jac} below floor {floor}")]
    DegenerateMap { min_jac: f64, floor: f64 },
    #[error("elliptic solver did not converge: {iterations} iterations, residual {residual:e}")]
    EllipticDivergence { iterations: usize, residual: f64 },
    #[error("pure Neumann problem with incompatible data (mismatch {mismatch:e})")]
    IncompatibleData { mismatch: f64 },
    #[error("compatibility condition violated: {0}")]
    CompatibilityError(String),
    #[error("stability condition violated: Lambda_min = {lambda_min} < {threshold}")]
    StabilityError { lambda_min: f64, threshold: f64 },
    #[error("Picard iteration does not contract (ratios {ratios:?})")]
    NoContraction { ratios: Vec<f64> },
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("need at least {need} samples, got {have}")]
    InsufficientHistory { have: usize, need: usize },
    #[error("trajectory outside the iteration space: {0}")]
    MembershipViolation(String),
    #[error("time step {dt} exceeds the CFL bound {bound}")]
    TimeStepTooLarge { dt: f64, bound: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
