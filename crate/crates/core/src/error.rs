use thiserror::Error;

/// Errors produced by the solvers, the flow integrator and the experiment drivers.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or inconsistent input (dimension mismatch, non-finite entries, bad ranges).
    #[error("invalid input: {0}")]
    Input(String),

    /// Pivoting failed: budget exhausted or no feasible pivot.
    #[error("solver failure: {0}")]
    Solver(String),

    /// The ODE integrator could not continue. `last_state` is the last accepted state.
    #[error("integrator failure at t = {t}: {reason}")]
    Integrator {
        t: f64,
        reason: String,
        last_state: Vec<f64>,
    },

    /// An internal invariant was found violated at runtime.
    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Whether the error came from a numerical solver rather than from bad input or I/O.
    pub fn is_solver_error(&self) -> bool {
        matches!(
            self,
            Error::Solver(_) | Error::Integrator { .. } | Error::Invariant(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn input<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Input(msg.into()))
}
