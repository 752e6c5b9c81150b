use serde::Serialize;

use deal_core::{Error as CoreError, FieldError};

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const CONFIG: i32 = 2;
    pub const MISSING_INPUT: i32 = 3;
    pub const RUNTIME: i32 = 4;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, thiserror::Error)]
#[error("{message}")]
pub struct CliError {
    pub code: i32,
    pub kind: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub fields: Vec<FieldError>,
}

impl CliError {
    pub fn config(fields: Vec<FieldError>) -> Self {
        let message = format!(
            "invalid configuration: {}",
            fields.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
        );
        Self { code: exit::CONFIG, kind: "config", message, fields }
    }

    pub fn field(field: &str, message: impl Into<String>) -> Self {
        Self::config(vec![FieldError::new(field, message)])
    }

    pub fn missing(message: impl Into<String>) -> Self {
        Self { code: exit::MISSING_INPUT, kind: "missing_input", message: message.into(), fields: vec![] }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        Self { code: exit::RUNTIME, kind: "runtime", message: message.into(), fields: vec![] }
    }

    /// `{"error": {...}}` for `--json`.
    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": self }).to_string()
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Config(fields) => Self::config(fields),
            CoreError::SchemaVersion { .. } => Self::field("schema_version", e.to_string()),
            CoreError::Io(io) if io.kind() == std::io::ErrorKind::NotFound => Self::missing(io.to_string()),
            other => Self::runtime(other.to_string()),
        }
    }
}

/// I/O error on `path`, classified by kind.
pub fn io_error(path: &std::path::Path, e: std::io::Error) -> CliError {
    let message = format!("{}: {e}", path.display());
    if e.kind() == std::io::ErrorKind::NotFound {
        CliError::missing(message)
    } else {
        CliError::runtime(message)
    }
}
