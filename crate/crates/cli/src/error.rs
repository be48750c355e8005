use std::path::Path;

use serde_json::{json, Value};
use thiserror::Error;

/// Failure of a CLI invocation, grouped by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { message: String, line: usize, column: usize },
    #[error("schema violation at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("invalid `{field}`: {message}")]
    Range { field: String, message: String },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("I/O error on {path}: {message}")]
    Io { path: String, message: String },
}

impl CliError {
    pub fn io(path: &Path, err: std::io::Error) -> Self {
        Self::Io { path: path.display().to_string(), message: err.to_string() }
    }

    pub fn range(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Range { field: field.into(), message: message.into() }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Parse { .. } | Self::Schema { .. } | Self::Range { .. } => 2,
            Self::Numerical(_) => 3,
            Self::Io { .. } => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Parse { .. } => "parse",
            Self::Schema { .. } => "schema",
            Self::Range { .. } => "range",
            Self::Numerical(_) => "numerical",
            Self::Io { .. } => "io",
        }
    }

    /// Machine-readable error record written to stderr on failure.
    pub fn record(&self) -> Value {
        let mut body = json!({
            "kind": self.kind(),
            "exit_code": self.exit_code(),
            "message": self.to_string(),
        });
        let extra = match self {
            Self::Parse { line, column, .. } => json!({ "line": line, "column": column }),
            Self::Schema { path, .. } => json!({ "field": path }),
            Self::Range { field, .. } => json!({ "field": field }),
            Self::Io { path, .. } => json!({ "path": path }),
            Self::Numerical(_) => json!({}),
        };
        if let (Some(b), Value::Object(e)) = (body.as_object_mut(), extra) {
            b.extend(e);
        }
        json!({ "error": body })
    }
}

impl From<sfwm_core::Error> for CliError {
    fn from(err: sfwm_core::Error) -> Self {
        use sfwm_core::Error as E;
        match err {
            E::Invalid { field, reason } => Self::Range { field, message: reason },
            E::OutOfRange { what, .. } => Self::Range { field: what.to_string(), message: err.to_string() },
            E::LengthMismatch { .. } => Self::range("streams", err.to_string()),
            E::Domain(_) | E::UndefinedCar | E::NonConvergence(_) => Self::Numerical(err.to_string()),
        }
    }
}
