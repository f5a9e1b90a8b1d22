use std::io;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("time {t} outside [0, {horizon}]")]
    TimeOutOfRange { t: f64, horizon: f64 },

    #[error("step size {dt} too large for the counting filter: dt * max intensity = {product} >= 1")]
    JumpStepTooLarge { dt: f64, product: f64 },

    #[error("explicit scheme unstable: time step {dt} exceeds bound {limit} (c * h^2 / max diffusion)")]
    Unstable { dt: f64, limit: f64 },

    #[error("explicit scheme lost monotonicity at slice {slice}, node {node}: coefficient sum {coefficient} > 1")]
    UnstableAtNode {
        slice: usize,
        node: usize,
        coefficient: f64,
    },

    #[error("non-finite value at slice {slice}, node {node}")]
    NonFinite { slice: usize, node: usize },

    #[error("model mismatch: expected {expected}, found {found}")]
    ModelMismatch { expected: String, found: String },

    #[error("malformed value grid: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }

    /// True for errors caused by the caller's configuration rather than by a
    /// failure during computation or I/O.
    pub fn is_configuration(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter { .. }
                | Error::InvalidState(_)
                | Error::TimeOutOfRange { .. }
                | Error::JumpStepTooLarge { .. }
                | Error::Unstable { .. }
                | Error::ModelMismatch { .. }
        )
    }
}
