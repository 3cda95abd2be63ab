use std::io;

use thiserror::Error;

/// Errors produced anywhere in the compression pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] io::Error),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("coordinate {coord:?} outside grid [0, {resolution})")]
    OutOfRange { coord: [i64; 3], resolution: u32 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("structural mismatch: {0}")]
    Structure(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("training diverged at lambda {lambda} step {step}: loss {loss}")]
    Diverged { lambda: f64, step: usize, loss: f64 },

    #[error("corrupt stream: {0}")]
    Corrupt(String),

    #[error("no configuration matches {target} parameters; nearest: {nearest}")]
    NoMatch { target: u64, nearest: String },
}

pub type Result<T> = std::result::Result<T, Error>;
