use num_complex::Complex64;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("step size collapsed to {step:e} near x = {at}")]
    NonConvergence { at: Complex64, step: f64 },

    #[error("contour has zero length")]
    InvalidContour,

    #[error("states live at different points: {0} vs {1}")]
    MismatchedPoint(Complex64, Complex64),

    #[error("overflow while computing {0}")]
    Overflow(&'static str),

    #[error("x = {x} lies outside the sector |arg x| < 3pi/5")]
    OutsideSector { x: Complex64 },

    #[error("|x| = {radius} is below the validity radius {required} of the truncated series")]
    RadiusTooSmall { radius: f64, required: f64 },

    #[error("Wronskian W[Y1,Y2] degenerate (relative size {0:e})")]
    DegenerateWronskian(f64),

    #[error("basis expansion not converged: |E(N) - E(2N)| = {change:e} at N = {basis}")]
    NotConverged { basis: usize, change: f64 },

    #[error("Newton iteration diverged: {0}")]
    NewtonDiverged(String),

    #[error("levels collide at beta = {beta}: separation {separation:e}")]
    BranchCollision { beta: Complex64, separation: f64 },

    #[error("b2 must be nonzero")]
    ZeroB2,

    #[error("matching condition violated: {0}")]
    ConditionViolated(String),

    #[error("exponent separation too small for a verdict: {0}")]
    InsufficientSeparation(String),

    #[error("point is not on the double characteristic set (distance {0:e})")]
    NotOnSigma(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    /// True for failures of a numerical method (as opposed to a violated
    /// property or a bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence { .. }
                | Error::Overflow(_)
                | Error::NotConverged { .. }
                | Error::NewtonDiverged(_)
                | Error::DegenerateWronskian(_)
                | Error::RadiusTooSmall { .. }
        )
    }
}
