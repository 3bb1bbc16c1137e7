use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("grid has no interior node")]
    EmptyGrid,
    #[error("surface quadrature unsupported: {0}")]
    UnsupportedDomain(String),
    #[error("field length {found} does not match grid node count {expected}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("linear solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    SolverDiverged { iterations: usize, residual: f64 },
    #[error("nonlinear iteration did not converge after {iterations} iterations (last change {last_change:e})")]
    NotConverged { iterations: usize, last_change: f64 },
    #[error("iterate lost positivity and could not be restored")]
    NegativePhase,
    #[error("exponent p = {p} must exceed (N-2)/2 = {bound}")]
    ExponentDegenerate { p: f64, bound: f64 },
    #[error("power overflow: {0}")]
    Overflow(String),
    #[error("shooting failed: no sign change in bracket [{lo:e}, {hi:e}]")]
    ShootFailed { lo: f64, hi: f64 },
    #[error("ODE integration failed: {0}")]
    StiffFailure(String),
    #[error("geometry error: {0}")]
    GeometryError(String),
    #[error("source point is {distance} from the boundary, need at least {required}")]
    SourceTooCloseToBoundary { distance: f64, required: f64 },
    #[error("no critical point found")]
    NoCriticalPoint,
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("at p = {p}: {source}")]
    AtExponent {
        p: f64,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
