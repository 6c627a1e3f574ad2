use thiserror::Error;

/// Errors raised by the estimation pipeline.
///
/// Variants fall in two families that the command-line front end maps to
/// different exit codes: input/configuration problems, and statistical
/// insufficiency (quantities that are undefined on the supplied data).
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EiError {
    #[error("row {row} ({id}): {message}")]
    Validation {
        row: usize,
        id: String,
        message: String,
    },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("non-degeneracy violated: {0}")]
    NonDegeneracy(String),

    #[error("degenerate group: {0}")]
    DegenerateGroup(String),

    #[error("no variation in group prevalence across neighborhoods; ecological regression slope is undefined")]
    NoVariation,

    #[error("profile is infeasible: {0}")]
    Infeasible(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("derivative undefined at x = {x0}: {reason}")]
    UndefinedDerivative { x0: f64, reason: String },

    #[error("bandwidth grid too narrow: candidate h = {bandwidth} failed on fold {fold}; widen the candidate grid")]
    WidenGrid { bandwidth: f64, fold: usize },

    #[error("no neighborhood within tolerance {tolerance} of prevalence {prevalence}")]
    NotFound { prevalence: f64, tolerance: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error(
        "bootstrap failed: all {replicates} replicates undefined; first failure: {first_failure}"
    )]
    BootstrapFailure {
        replicates: usize,
        first_failure: String,
    },

    #[error("instance too large: {points} grid points exceeds cap {cap}; use a smaller grid")]
    InstanceTooLarge { points: u128, cap: u128 },
}

impl EiError {
    /// True for errors that describe the data failing to support a quantity
    /// (as opposed to malformed input or configuration).
    pub fn is_statistical(&self) -> bool {
        matches!(
            self,
            EiError::NoVariation
                | EiError::UndefinedDerivative { .. }
                | EiError::WidenGrid { .. }
                | EiError::InsufficientData(_)
                | EiError::BootstrapFailure { .. }
                | EiError::DegenerateGroup(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, EiError>;
