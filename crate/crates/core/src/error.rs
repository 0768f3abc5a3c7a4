use alloc::string::String;
use alloc::vec::Vec;

use crate::qcore::Qubit;
use crate::tomo::Basis;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("qubit {0:?} appears more than once")]
    DuplicateQubit(Qubit),

    #[error("registers overlap on {0:?}")]
    OverlappingRegisters(Qubit),

    #[error("register mismatch: expected {expected:?}, found {found:?}")]
    RegisterMismatch { expected: Vec<Qubit>, found: Vec<Qubit> },

    #[error("qubit {0:?} is not part of the register")]
    UnknownQubit(Qubit),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("operator is not an orthogonal projector")]
    NotProjector,

    #[error("channel is not trace preserving (deviation {0:e})")]
    NotTracePreserving(f64),

    #[error("impossible outcome (probability {0:e})")]
    ImpossibleOutcome(f64),

    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("degenerate trial weights: detection probability must be positive")]
    DegenerateWeights,

    #[error("incomplete tomography: missing settings {missing:?}")]
    IncompleteTomography { missing: Vec<Vec<Basis>> },

    #[error("sinusoid fit needs at least 4 phase points, got {0}")]
    TooFewPhases(usize),

    #[error("fit needs at least {needed} data points, got {found}")]
    TooFewPoints { needed: usize, found: usize },

    #[error("singular normal equations")]
    Singular,
}

impl Error {
    pub(crate) fn param(name: &'static str, value: f64, reason: &'static str) -> Self {
        Error::InvalidParameter { name, value, reason }
    }
}

/// Checks that `value` is a probability.
pub(crate) fn check_probability(name: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::param(name, value, "must lie in [0, 1]"))
    }
}
