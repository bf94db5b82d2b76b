use serde::Serialize;
use thiserror::Error;

/// One named problem in a config.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldError {
    pub field: String,
    pub reason: String,
}

impl FieldError {
    pub fn new(field: &str, reason: String) -> Self {
        FieldError { field: field.to_string(), reason }
    }

    pub fn from_core(e: fpmatch_core::Error) -> Self {
        match e {
            fpmatch_core::Error::Config { field, reason } => FieldError { field, reason },
            other => FieldError { field: "<config>".into(), reason: other.to_string() },
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad invocation or config; exit code 1.
    #[error("invalid configuration")]
    Config(Vec<FieldError>),
    /// Failure while doing the work; exit code 2.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }

    pub fn usage(message: String) -> Self {
        CliError::Config(vec![FieldError::new("<usage>", message)])
    }

    /// Single-line JSON for stderr.
    pub fn to_line(&self) -> String {
        let v = match self {
            CliError::Config(errs) => serde_json::json!({ "error": "config", "details": errs }),
            CliError::Runtime(msg) => serde_json::json!({ "error": "runtime", "message": msg }),
        };
        v.to_string()
    }
}

impl From<fpmatch_core::Error> for CliError {
    fn from(e: fpmatch_core::Error) -> Self {
        match e {
            fpmatch_core::Error::Config { .. } => CliError::Config(vec![FieldError::from_core(e)]),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(format!("i/o: {e}"))
    }
}
