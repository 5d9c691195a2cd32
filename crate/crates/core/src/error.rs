use thiserror::Error;

/// Everything that can go wrong inside the engine.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum CosimError {
    #[error("invalid step: t1 = {t1} must be greater than t0 = {t0}")]
    InvalidStep { t0: f64, t1: f64 },

    #[error("usage error: {0}")]
    Usage(String),

    /// A capability the caller relied on is not exposed by the system.
    /// Recoverable: the master uses it to pick a degraded mode.
    #[error("system `{system}` lacks capability `{capability}`")]
    Capability { system: String, capability: &'static str },

    #[error("integration diverged; last finite state at t = {last_time}")]
    Divergence { last_time: f64 },

    #[error("pole hit while evaluating a rational function at s = {s}")]
    Pole { s: f64 },

    #[error("no convergence after {iterations} iterations on the step starting at t = {t}")]
    NonConvergence { t: f64, iterations: usize },
}

impl CosimError {
    /// Last simulated time known to be valid, when the error carries one.
    pub fn last_time(&self) -> Option<f64> {
        match self {
            CosimError::Divergence { last_time } => Some(*last_time),
            CosimError::NonConvergence { t, .. } => Some(*t),
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, CosimError>;
