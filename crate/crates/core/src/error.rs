use thiserror::Error;

/// Every failure the library can report.
///
/// Variants carry the location (grid point, time, screen position) where the
/// problem was detected so callers can act on it without re-running.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("non-finite value in solution near x = {x}")]
    NonFiniteSolution { x: f64 },
    #[error("found {found} of {requested} bound states in the energy window")]
    BracketExhausted { found: usize, requested: usize },
    #[error("x = {x} outside sampled domain [{lo}, {hi}]")]
    OutOfDomain { x: f64, lo: f64, hi: f64 },
    #[error("momentum has imaginary part {imag:e} at x = {x}")]
    NonRealMomentum { x: f64, imag: f64 },
    #[error("wave function vanishes at x = {x}")]
    NodeSingularity { x: f64 },
    #[error("cannot follow arctan branch between x = {x0} and x = {x1}")]
    BranchTrackingFailure { x0: f64, x1: f64 },
    #[error("velocity is zero; higher-order Lagrangian undefined")]
    ZeroVelocity,
    #[error("velocity collapsed toward zero at t = {t}")]
    VelocityCollapse { t: f64 },
    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64 },
    #[error("semiclassical parameter eps = {eps} outside the supported regime")]
    RegimeViolation { eps: f64 },
    #[error("path spans {periods:.2} periods; at least {required} are needed")]
    InsufficientSpan { periods: f64, required: f64 },
    #[error("no positive root for the squared speed")]
    NoRealRoot,
    #[error("angular momentum is not real (imaginary part {imag:e})")]
    NonRealResult { imag: f64 },
    #[error("theta solution hits a pole at theta = {theta}")]
    PoleSingularity { theta: f64 },
    #[error("Fresnel approximation invalid at (x, z) = ({x}, {z})")]
    ValidityViolation { x: f64, z: f64 },
    #[error("quadrature failed to converge (estimated error {estimate:e})")]
    QuadratureFailure { estimate: f64 },
    #[error("window holds {found} fringes; at least {required} are needed")]
    InsufficientFringes { found: usize, required: usize },
    #[error("trajectories {i} and {j} cross before the screen")]
    TrajectoryCrossing { i: usize, j: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;
