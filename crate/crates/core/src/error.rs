//! Error type shared across the crate.

/// Errors produced by problem construction, integration, and metric evaluation.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Dimension mismatches, malformed matrices, misaligned grids.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Evaluation requested at a time before the schedule start.
    #[error("time {t} precedes schedule start t0 = {t0}")]
    TimeBeforeStart { t: f64, t0: f64 },

    /// The constraint system `A x = b` has no solution.
    #[error("infeasible constraints: {0}")]
    Infeasible(String),

    /// Constraints are feasible but the stationarity system has no multiplier.
    #[error("multiplier set is empty (KKT system inconsistent): {0}")]
    KktInconsistent(String),

    /// Quadrature, root finding, or linear solve failure.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// The ODE integrator could not continue past `last_good_t`.
    #[error("integration failed at t = {last_good_t}: {reason}")]
    IntegrationFailure { last_good_t: f64, reason: String },

    /// A metric anchor does not satisfy the saddle-point residual check.
    #[error("anchor is not a saddle point: operator residual {residual:.3e}")]
    InvalidAnchor { residual: f64 },

    /// A rate fit was requested on an identically-zero tail; the series has
    /// converged exactly and carries no decay exponent.
    #[error("series '{0}' is identically zero on the fit window (exact convergence)")]
    DegenerateSeries(String),
}

pub type Result<T> = std::result::Result<T, Error>;
