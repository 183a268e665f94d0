use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("collision: mutual distance {distance:e} at t = {time}")]
    Collision { time: f64, distance: f64 },
    #[error("step size underflow at t = {time} (h = {step:e})")]
    StepFailure { time: f64, step: f64 },
    #[error("Newton iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("section Jacobian lost rank {rank} < {expected}; weakest direction {direction:?}")]
    RankDeficiency {
        rank: usize,
        expected: usize,
        direction: Vec<f64>,
    },
    #[error("continuation stalled at J_p = {last_good_deg}° (step floor reached)")]
    ContinuationStalled { last_good_deg: f64 },
    #[error("invalid bracket: {0}")]
    BracketInvalid(String),
    #[error("integrand singular at zeta1 = {zeta1}, s0 = {s0}")]
    SingularIntegrand { zeta1: f64, s0: f64 },
    #[error("branch exhausted at s0 = {s0}")]
    BranchExhausted { s0: f64 },
    #[error("degenerate equilibrium: |d2F1| = {curvature:e}")]
    DegenerateEquilibrium { curvature: f64 },
    #[error("grids cannot be aligned: {0}")]
    Interpolation(String),
}

pub type Result<T> = std::result::Result<T, Error>;
