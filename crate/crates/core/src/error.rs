//! Error types shared by all operators.

use crate::attack::AttackTrajectory;

/// Library-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Tensor shape does not satisfy an operator precondition.
    #[error("shape error: {0}")]
    Shape(String),

    /// An inverse transform produced a significant imaginary part although
    /// the caller asserted a conjugate-symmetric spectrum.
    #[error("asymmetric spectrum: imaginary residual {residual:.3e} exceeds limit {limit:.3e}")]
    Asymmetry { residual: f64, limit: f64 },

    /// A mixing coefficient left the guarded range.
    #[error("degenerate coefficient: {0}")]
    Degenerate(String),

    /// An alias probe lies inside the retained low band.
    #[error("probe frequency ({0}, {1}) cycles/sample is inside the retained band")]
    FrequencyRange(f64, f64),

    /// Channel index out of range.
    #[error("channel index {index} out of range for {channels} channels")]
    Index { index: usize, channels: usize },

    /// Operator name not present in the registry.
    #[error("unknown operator: {0}")]
    UnknownOp(String),

    /// The attack loss gradient became non-finite; the partial trajectory
    /// up to the failing iteration is attached.
    #[error("non-finite gradient at iteration {iteration}")]
    NonFiniteGradient {
        iteration: usize,
        trajectory: Box<AttackTrajectory>,
    },

    /// A configuration value violates its invariant.
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}
