use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(
        "could not generate a simple {r}-regular graph on {n} vertices after {attempts} pairings"
    )]
    GenerationFailure { n: usize, r: usize, attempts: usize },

    /// A recurrence or ODE denominator (w or b) reached zero.
    #[error("degenerate state: {0}")]
    DegenerateState(String),

    #[error("integration failed at x = {x}: {reason}")]
    IntegrationFailure { x: f64, reason: String },

    #[error("integration did not converge before x = {x_max}")]
    HorizonExceeded { x_max: f64 },

    #[error("enumeration of {assignments} assignments exceeds the budget of {budget}")]
    BudgetExceeded { assignments: f64, budget: f64 },

    #[error("optimization failed: {0}")]
    OptimizationFailure(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for failures of the numerics rather than of the caller's input.
    pub fn is_numeric(&self) -> bool {
        !matches!(self, Error::InvalidArgument(_))
    }
}
