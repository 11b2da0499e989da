use thiserror::Error;

/// Errors raised by the simulator library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid density matrix: {0}")]
    InvalidState(String),

    #[error("step size underflow at t = {time:.6} (h = {step:.3e}); the problem is too stiff for the explicit integrator")]
    Stiffness { time: f64, step: f64 },

    #[error("positivity violated at t = {time:.6}: minimum eigenvalue {min_eigenvalue:.3e}")]
    Positivity { time: f64, min_eigenvalue: f64 },

    #[error("steady state is not unique: Liouvillian null space is degenerate ({0})")]
    Multiplicity(String),

    #[error("steady state requires a time-independent generator")]
    TimeDependentGenerator,

    #[error("steady-state residual {residual:.3e} exceeds bound {bound:.3e}")]
    Residual { residual: f64, bound: f64 },

    #[error("cutoff {cutoff} not converged: `{observable}` changed by {relative_change:.3e} relative on doubling")]
    NotConverged {
        cutoff: usize,
        observable: String,
        relative_change: f64,
    },

    #[error("matrix decomposition failed: {0}")]
    Decomposition(String),

    #[error("self-consistency did not converge after {0} iterations")]
    SelfConsistency(usize),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("inconsistent efficiency: {0}")]
    Inconsistent(String),

    #[error("at detuning {detuning}: {source}")]
    AtDetuning {
        detuning: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("matrix dump: {0}")]
    Dump(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the physics itself (non-convergence, stiffness,
    /// positivity) as opposed to bad input.
    pub fn is_physics_failure(&self) -> bool {
        match self {
            Error::Stiffness { .. }
            | Error::Positivity { .. }
            | Error::Multiplicity(_)
            | Error::Residual { .. }
            | Error::NotConverged { .. }
            | Error::Decomposition(_)
            | Error::SelfConsistency(_) => true,
            Error::AtDetuning { source, .. } => source.is_physics_failure(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
