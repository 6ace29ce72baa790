use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum WfrError {
    #[error("invalid grid size: {0}")]
    GridSize(String),

    #[error("invalid measure: {0}")]
    Measure(String),

    #[error("invalid constraint: {0}")]
    Constraint(String),

    #[error("path construction failed: {0}")]
    PathConstruction(String),

    #[error("endpoints are infeasible for the constraint: max residual {max_residual:.3e} exceeds tolerance {tol:.3e}")]
    Infeasible { max_residual: f64, tol: f64 },

    #[error("conjugate gradient failed to reach tolerance {tol:.1e} within {iters} iterations (residual {residual:.3e}){hint}")]
    CgFailure { iters: usize, residual: f64, tol: f64, hint: String },

    #[error("Gram matrix is ill-conditioned (cond ≈ {cond:.3e}); remove linearly dependent constraint components")]
    IllConditionedGram { cond: f64 },

    #[error("solver terminated with non-finite energy; the density path degenerated")]
    NonFiniteEnergy,

    #[error("invalid solver parameters: {0}")]
    Params(String),

    #[error("config error: {0}")]
    Config(String),
}
