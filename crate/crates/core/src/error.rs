use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("non-finite state in coordinate {component} at t = {time} (stream {stream_id})")]
    NonFinite {
        time: f64,
        component: usize,
        stream_id: u64,
    },

    #[error("grid index {index} is outside the stored window [{first}, {last}]")]
    OutOfWindow { index: i64, first: i64, last: i64 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("insufficient horizon: {0}")]
    InsufficientHorizon(String),

    #[error("precondition failed: {0}")]
    Precondition(String),
}

impl Error {
    pub(crate) fn invalid(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }
}
