use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration or specification field failed validation. `path` names
    /// the offending field, e.g. `system.eps_xt` or `baths[3].lambda`.
    #[error("invalid `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("bath decomposition failed: {0}")]
    Bath(String),

    #[error("eigenproblem failed: {0}")]
    Eigen(String),

    #[error("quadrature did not converge: estimated error {estimate:e} exceeds tolerance {tolerance:e}")]
    Quadrature { estimate: f64, tolerance: f64 },

    /// The hierarchy would hold more ADOs than the configured budget.
    #[error("hierarchy too large: {count} ADOs exceeds budget of {budget}")]
    HierarchyBudget { count: u128, budget: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Propagation stopped because the state left its admissible region.
    #[error("numerical abort at t = {time}: {message}")]
    Numerical { time: f64, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config { path: path.into(), message: message.into() }
    }

    /// True for errors caused by user input rather than by the numerics.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config { .. } | Error::Json(_) | Error::Dimension(_) | Error::HierarchyBudget { .. })
    }
}
