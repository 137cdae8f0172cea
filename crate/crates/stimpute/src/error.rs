use std::io;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A file failed to parse; `line` is 1-based.
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    /// An argument or shape precondition was violated.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Normalization hit a channel with zero spread.
    #[error("channel {0} is constant over observed training entries (zero standard deviation)")]
    ConstantChannel(usize),

    /// A node has no neighbors under the adjacency and self-loops are off.
    #[error("node {0} has no neighbors and self-loops are disabled")]
    IsolatedNode(usize),

    /// A loss or metric was requested over a mask that selects nothing.
    #[error("mask selects no entries")]
    EmptyMask,

    #[error("checkpoint header: {0}")]
    CheckpointHeader(String),

    #[error("checkpoint lists unknown tensor `{0}`")]
    UnknownTensor(String),

    #[error("checkpoint tensor `{name}`: shape {found:?} does not match expected {expected:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("checkpoint payload truncated while reading `{0}`")]
    TruncatedPayload(String),

    /// Training produced a NaN or infinite loss.
    #[error("non-finite loss at epoch {epoch}, step {step}")]
    NonFiniteLoss { epoch: usize, step: usize },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
