use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid Fock configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid density matrix: {0}")]
    InvalidState(String),

    #[error("superoperator needs {required} stored entries, budget is {budget}")]
    MemoryBudget { required: usize, budget: usize },

    #[error("time stepping became unstable at t = {time}: trace drift {trace_drift:e}")]
    StepInstability { time: f64, trace_drift: f64 },

    #[error("steady state not converged: residual {residual:e} > tol {tol:e} after horizon {horizon}")]
    NotConverged { residual: f64, tol: f64, horizon: f64 },

    #[error("fixed point formula is singular: {0}")]
    Singular(String),

    #[error("trajectory diverged at t = {time} (|s| = {norm:e})")]
    Divergence { time: f64, norm: f64 },

    #[error("negative diffusion coefficient nu_{mode} = {nu} at state {state:?}")]
    NegativeDiffusion { mode: usize, nu: f64, state: [f64; 4] },

    #[error("trajectory {trajectory} (stream {stream}) failed: {source}")]
    Trajectory {
        trajectory: usize,
        stream: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("linear solve failed: {0}")]
    LinearSolve(String),
}
