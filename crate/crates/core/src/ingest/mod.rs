//! Network readers and solution writers.
//!
//! The canonical format is a versioned JSON document; GLM input covers a
//! small subset of GridLAB-D. Both produce a validated [`NetworkModel`].

mod canonical;
mod glm;
mod output;

use thiserror::Error;

use crate::model::{NetworkModel, Violation};

pub use canonical::{fingerprint, parse_canonical, parse_canonical_with, write_canonical, CANONICAL_VERSION};
pub use glm::{parse_glm_subset, GLM_BASE_POWER};
pub use output::{read_solution_json, write_solution, OutputFormat, CSV_HEADER};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParseMode {
    /// Unknown keys are errors.
    #[default]
    Strict,
    /// Unknown keys become warnings.
    Lenient,
}

/// A parsed network together with any non-fatal diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Parsed {
    pub network: NetworkModel,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IngestError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("{element}: {message}")]
    Semantic { element: String, message: String },
    #[error("branch '{branch}' has a singular impedance matrix")]
    SingularImpedance { branch: String },
    #[error("unknown keys: {}", .0.join(", "))]
    UnknownKeys(Vec<String>),
    #[error("invalid network: {}", join(.0))]
    Invalid(Vec<Violation>),
    #[error("line {line}: {message}")]
    Glm { line: usize, message: String },
}

fn join(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

impl IngestError {
    pub(crate) fn syntax(e: &serde_json::Error) -> IngestError {
        IngestError::Syntax {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        }
    }
}
