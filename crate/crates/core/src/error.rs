use thiserror::Error;

/// Error type shared by every module of the crate.
#[derive(Debug, Clone, Error)]
pub enum CoreError {
    /// A physical parameter violates its invariant (negative length, zero mass, ...).
    #[error("invalid parameter {name}: {reason}")]
    Param { name: &'static str, reason: String },

    /// A run was configured inconsistently (grid too small, unknown preset, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// Unit conversion between dimensionally incompatible quantities.
    #[error("incompatible units: cannot convert {from} to {to}")]
    UnitMismatch { from: &'static str, to: &'static str },

    /// A scaling transformation would divide by a zero rate.
    #[error("degenerate scale: collapse rate is zero (massless particle)")]
    DegenerateScale,

    /// Adaptive quadrature failed to reach the requested tolerance.
    /// Carries the best estimate so callers can still inspect it.
    #[error("quadrature did not converge: best estimate {best:.6e}, error estimate {error_estimate:.3e} after {evaluations} evaluations")]
    OracleFailure {
        best: f64,
        error_estimate: f64,
        evaluations: usize,
    },

    /// A propagation step was requested with too large a time step.
    #[error("time step too large: {detail}")]
    StepSize { detail: String },

    /// Covariance factorization failed even after diagonal jitter.
    #[error("covariance factorization failed after jitter")]
    FactorizationFailed,

    /// Monte Carlo statistics cannot support a conclusion.
    #[error("inconclusive statistics: {0}")]
    Inconclusive(String),

    /// A sampler was queried outside its tabulated parameter range.
    #[error("momentum {p:.6e} outside sampler range [{min:.6e}, {max:.6e}]")]
    Extrapolation { p: f64, min: f64, max: f64 },
}

pub type Result<T> = std::result::Result<T, CoreError>;
