use std::path::PathBuf;

use crate::simcore::SimTime;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("event in past: {kind} at {at}s while clock is {now}s")]
    EventInPast {
        at: SimTime,
        now: SimTime,
        kind: &'static str,
    },

    #[error("trace line {line}: {field}: {msg}")]
    Trace {
        line: usize,
        field: &'static str,
        msg: String,
    },

    #[error("config key `{key}`: {msg}")]
    Config { key: String, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A scheduler or cluster rule was broken, e.g. enqueueing on a draining server.
    #[error("logic error: {0}")]
    Logic(String),

    #[error("invariant violated at {at}s: {msg}")]
    Invariant { at: SimTime, msg: String },
}

impl Error {
    pub fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            msg: msg.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
