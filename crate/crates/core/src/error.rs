use std::io;

use thiserror::Error;

use crate::costmodel::KernelConfig;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad caller-supplied data (out-of-range ids, empty inputs, ...).
    #[error("invalid input: {0}")]
    Input(String),

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Parameter outside its allowed range, or a configuration the hardware cannot host.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A launch plan that references partitions or warps it does not contain.
    #[error("plan integrity violation: {0}")]
    Integrity(String),

    #[error("evaluation of {config} failed: {source}")]
    Evaluation {
        config: KernelConfig,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("profile parse error: {0}")]
    Toml(#[from] toml::de::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
