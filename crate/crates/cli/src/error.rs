use std::path::PathBuf;

use cbw_core::CbwError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },

    #[error("invalid value for `{field}`: {message}")]
    Semantic { field: String, message: String },

    #[error("unknown key `{key}`{}", location.map(|(l, c)| format!(" at line {l}, column {c}")).unwrap_or_default())]
    UnknownKey { key: String, location: Option<(usize, usize)> },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("cannot write {}: {source}", path.display())]
    Output { path: PathBuf, source: std::io::Error },

    #[error("cannot read {}: {source}", path.display())]
    Input { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn semantic(field: impl Into<String>, message: impl std::fmt::Display) -> Self {
        CliError::Semantic { field: field.into(), message: message.to_string() }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Syntax { .. }
            | CliError::Semantic { .. }
            | CliError::UnknownKey { .. }
            | CliError::Input { .. } => 2,
            CliError::Invariant(_) => 3,
            CliError::Output { .. } => 4,
        }
    }
}

/// Domain errors come from bad parameters; anything else is an internal failure.
impl From<CbwError> for CliError {
    fn from(e: CbwError) -> Self {
        match e {
            CbwError::Domain(msg) => CliError::semantic("scenario", msg),
            CbwError::AmbiguousInterval { .. } | CbwError::Unidentifiable | CbwError::UnboundedCrlb { .. } => {
                CliError::semantic("scenario", e)
            }
            CbwError::Calibration(_) | CbwError::ZeroAcPower => CliError::Invariant(e.to_string()),
        }
    }
}
