use thiserror::Error;

/// Errors raised by the numerical laboratory.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    /// An argument lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Free-mode potential evaluation would need couplings outside the sampled box.
    #[error("point {point:?} needs lattice site {site:?}, which lies outside the sampled box")]
    OutOfCoverage { point: Vec<f64>, site: Vec<i64> },

    /// Incompatible geometry, mode, or resolution.
    #[error("configuration error: {0}")]
    Configuration(String),

    /// The Lévy kernel was evaluated on the diagonal.
    #[error("singular evaluation: {0}")]
    Singularity(String),

    /// A density or weight fell outside the representable range.
    #[error("numeric range error: {0}")]
    NumericRange(String),

    /// An iterative procedure or refinement sequence did not behave as required.
    #[error("convergence error: {0}")]
    Convergence(String),

    /// The requested evaluation mode is not available for this input.
    #[error("mode error: {0}")]
    Mode(String),

    /// Too few nonzero observations to form an estimate.
    #[error("insufficient statistics: {0}")]
    InsufficientStatistics(String),

    /// Malformed serialized input.
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, LabError>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(LabError::Domain(msg.into()))
}

pub(crate) fn config<T>(msg: impl Into<String>) -> Result<T> {
    Err(LabError::Configuration(msg.into()))
}
