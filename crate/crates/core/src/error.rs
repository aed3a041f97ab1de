use std::io;

use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("loss must be a 1x1 scalar, got {0:?}")]
    NonScalarLoss((usize, usize)),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dissimilarity is undefined for a zero-norm angle-delay profile")]
    ZeroNorm,

    #[error("neighbourhood graph is disconnected: component sizes {0:?}")]
    Disconnected(Vec<usize>),

    #[error("region {0} has no samples in the 1-NN fit set")]
    EmptyFitRegion(usize),

    #[error("training diverged at step {step}: loss {loss}, lr {lr}, grad norm {grad_norm}")]
    Diverged {
        step: usize,
        loss: f64,
        lr: f64,
        grad_norm: f64,
    },

    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn format(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Format {
            what,
            detail: detail.into(),
        }
    }
}
