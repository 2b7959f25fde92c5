use std::io;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: u64, message: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("parameter layout mismatch: {0}")]
    Layout(String),

    #[error("unknown client id {client} (K = {num_clients})")]
    UnknownClient { client: usize, num_clients: usize },

    #[error("training diverged: non-finite value ({value}) at round {round}")]
    NonFinite { round: usize, value: f64 },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error("malformed header: {0}")]
    Header(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn parse(offset: u64, message: impl Into<String>) -> Self {
        Error::Parse {
            offset,
            message: message.into(),
        }
    }
}
