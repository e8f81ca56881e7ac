use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::Status;

/// One violated constraint on a [`TrialDesign`](crate::TrialDesign) field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl FieldError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid trial design: {}", join(.0))]
    InvalidDesign(Vec<FieldError>),

    /// The trial already reached a terminal status; observations are rejected.
    #[error("trial already stopped ({0})")]
    AlreadyStopped(Status),

    #[error("no observations recorded yet")]
    NoObservations,

    #[error("trial has not stopped (status {0})")]
    NotStopped(Status),

    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),

    #[error("malformed report: {0}")]
    Parse(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

fn join(errs: &[FieldError]) -> String {
    errs.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}
