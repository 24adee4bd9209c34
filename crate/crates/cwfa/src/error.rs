use thiserror::Error;

/// Errors produced by model construction, fitting, and selection.
#[derive(Debug, Error)]
pub enum CwfaError {
    /// A parameter value violates its domain (non-positive variance, bad code string, ...).
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// An input (dataset, option combination) is unusable.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The low-rank covariance became numerically singular.
    #[error("degenerate covariance: {0}")]
    DegenerateCovariance(String),

    /// A mixture component lost (almost) all of its expected members.
    #[error("degenerate component {component} at iteration {iteration}: expected membership below 2")]
    DegenerateComponent { component: usize, iteration: usize },

    /// The weighted second-moment matrix of a component regression is singular.
    #[error("singular regression system in component {component}")]
    SingularRegression { component: usize },

    /// The root model of the hierarchical initialization failed.
    #[error("family initialization failed: {0}")]
    FamilyInit(String),

    /// Every fit in a grid search failed.
    #[error("search failed: {0}")]
    SearchFailed(String),
}

pub type Result<T> = std::result::Result<T, CwfaError>;
