use std::fmt;

use serde::Serialize;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// One violated model invariant, with the offending indices.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Diagnostic {
    Asymmetric {
        i: usize,
        u: char,
        j: usize,
        v: char,
        forward: f64,
        backward: f64,
    },
    SelfCoupling {
        i: usize,
        u: char,
        v: char,
    },
    NonFinite {
        location: String,
    },
    IndexOutOfRange {
        location: String,
        index: usize,
        n: usize,
    },
    Duplicate {
        location: String,
    },
    ObservedNotVisible {
        i: usize,
    },
    DaleViolation {
        neuron: usize,
    },
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::Asymmetric {
                i,
                u,
                j,
                v,
                forward,
                backward,
            } => write!(
                f,
                "V[{i},{u},{j},{v}] = {forward} but V[{j},{v},{i},{u}] = {backward}"
            ),
            Diagnostic::SelfCoupling { i, u, v } => {
                write!(f, "self-coupling V[{i},{u},{i},{v}]")
            }
            Diagnostic::NonFinite { location } => write!(f, "non-finite value at {location}"),
            Diagnostic::IndexOutOfRange { location, index, n } => {
                write!(f, "index {index} out of range 0..{n} at {location}")
            }
            Diagnostic::Duplicate { location } => write!(f, "duplicate entry {location}"),
            Diagnostic::ObservedNotVisible { i } => {
                write!(f, "unit {i} is observed but not visible")
            }
            Diagnostic::DaleViolation { neuron } => {
                write!(f, "neuron {neuron} has outgoing weights of both signs")
            }
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("model validation failed: {}", join(.0))]
    Invalid(Vec<Diagnostic>),
    #[error("capacity exceeded: {what} is {actual}, limit {limit}")]
    Capacity {
        what: &'static str,
        actual: usize,
        limit: usize,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("mismatch: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }
}

fn join(d: &[Diagnostic]) -> String {
    d.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}
