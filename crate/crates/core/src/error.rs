use alloc::string::String;

use thiserror::Error;

/// Errors raised by the matching core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension error in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid configuration: {field}: {reason}")]
    Config { field: String, reason: String },
    #[error("generation failed: {0}")]
    Generation(String),
    #[error("dataset error: {0}")]
    Dataset(String),
    #[error("non-finite loss at epoch {epoch}, batch seed {batch_seed:#018x}")]
    NonFiniteLoss { epoch: usize, batch_seed: u64 },
    #[error("model/problem mismatch: {0}")]
    Mismatch(String),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn dim_err<T>(op: &'static str, detail: String) -> Result<T> {
    Err(Error::Dimension { op, detail })
}
