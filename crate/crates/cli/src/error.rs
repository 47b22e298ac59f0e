use pcap_core::{CapacityError, CriterionError, SubmersionError};
use thiserror::Error;

/// Exit code for bad input: files, spec contents, flags, preconditions.
pub const EXIT_INPUT: i32 = 3;
/// Exit code for numerical failures on valid input.
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("invalid spec: {0}")]
    Spec(String),
    #[error("{0}")]
    Usage(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numerical(_) => EXIT_NUMERICAL,
            _ => EXIT_INPUT,
        }
    }
}

fn capacity_is_input(e: &CapacityError) -> bool {
    matches!(
        e,
        CapacityError::InvalidExponent(_)
            | CapacityError::InvalidRadius { .. }
            | CapacityError::GridTooSmall(_)
            | CapacityError::Schedule(_)
    )
}

impl From<CapacityError> for CliError {
    fn from(e: CapacityError) -> Self {
        if capacity_is_input(&e) {
            CliError::Usage(e.to_string())
        } else {
            CliError::Numerical(e.to_string())
        }
    }
}

impl From<CriterionError> for CliError {
    fn from(e: CriterionError) -> Self {
        match e {
            CriterionError::Capacity(c) => c.into(),
            CriterionError::Options(_) | CriterionError::EmptyGrid => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<SubmersionError> for CliError {
    fn from(e: SubmersionError) -> Self {
        match e {
            SubmersionError::Capacity(c) => c.into(),
            SubmersionError::Criterion(c) => c.into(),
            SubmersionError::Precondition(_)
            | SubmersionError::Schedule(_)
            | SubmersionError::ExponentMismatch { .. }
            | SubmersionError::Range(_)
            | SubmersionError::Model(_) => CliError::Usage(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}
