use thiserror::Error;

/// Errors raised by the simulator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A truncated expansion kept less probability mass than required.
    #[error("truncation error: achieved norm {achieved_norm:.3e} below required {required:.3e}")]
    Truncation { achieved_norm: f64, required: f64 },

    /// A quantity that must be conserved drifted past its tolerance.
    #[error("numerical tolerance breached in {context}: deviation {deviation:.3e} > {tolerance:.3e}")]
    Tolerance {
        context: &'static str,
        deviation: f64,
        tolerance: f64,
    },

    #[error("outcome {outcome} has zero probability ({probability:.3e}) and cannot be conditioned on")]
    ZeroProbability { outcome: String, probability: f64 },

    #[error("photon state is not confined to a single total-number sector")]
    NotSingleSector,

    #[error("qubit index {index} out of range for a {size}-qubit register")]
    QubitIndex { index: usize, size: usize },
}

impl SimError {
    /// True for errors caused by numerics rather than by caller input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, SimError::Tolerance { .. } | SimError::Truncation { .. })
    }
}

pub type Result<T> = std::result::Result<T, SimError>;

pub(crate) fn invalid(msg: impl Into<String>) -> SimError {
    SimError::InvalidArgument(msg.into())
}
