use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid parameters: profiles, channel stages, matrix files, MTU.
    #[error("configuration error: {0}")]
    Config(String),

    /// Malformed or unexpected bytes on the wire.
    #[error("protocol error: {0}")]
    Protocol(String),

    /// A parameter-encoded run name that does not follow the naming convention.
    #[error("cannot parse run name at token `{token}`: {reason}")]
    Parse { token: String, reason: String },

    /// Socket setup failure, including the port that could not be used.
    #[error("transport error on port {port}: {source}")]
    Bind {
        port: u16,
        #[source]
        source: io::Error,
    },

    #[error("transport error: {0}")]
    Transport(String),

    /// The simulated event queue drained while an endpoint was still waiting.
    #[error("simulation deadlock: {0}")]
    Deadlock(String),

    #[error("run {run_id} failed: {source}")]
    Run {
        run_id: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn protocol(msg: impl Into<String>) -> Self {
        Error::Protocol(msg.into())
    }

    /// True for errors caused by user-supplied configuration rather than the run itself.
    pub fn is_config(&self) -> bool {
        match self {
            Error::Config(_) | Error::Parse { .. } => true,
            Error::Run { source, .. } => source.is_config(),
            _ => false,
        }
    }
}
