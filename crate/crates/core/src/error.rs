use thiserror::Error;

use crate::model::Violation;

/// Errors raised by the planning toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {}", format_violations(.0))]
    InvalidModel(Vec<Violation>),

    #[error("no positive costs: cannot normalize an all-zero cost model")]
    NoPositiveCosts,

    #[error("state {state} out of range (model has {count} states)")]
    StateOutOfRange { state: usize, count: usize },

    #[error("action {action} out of range (model has {count} actions)")]
    ActionOutOfRange { action: usize, count: usize },

    #[error("unknown state label {0:?}")]
    UnknownLabel(String),

    #[error("{states} states exceeds the all-pairs cap of {cap}; solve per goal instead")]
    TooLarge { states: usize, cap: usize },

    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("wrong field or policy mode: {0}")]
    ModeMismatch(&'static str),

    #[error("mean decision mode requires an action embedding")]
    MissingEmbedding,

    #[error("inconsistent observation: symbol {symbol} has zero probability under the predicted belief")]
    InconsistentObservation { symbol: usize },

    #[error("mismatched spaces: {0}")]
    SpaceMismatch(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

fn format_violations(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

pub(crate) fn check_state(state: usize, count: usize) -> Result<()> {
    if state < count {
        Ok(())
    } else {
        Err(Error::StateOutOfRange { state, count })
    }
}
