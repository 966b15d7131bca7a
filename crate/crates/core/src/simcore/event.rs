use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::SimTime;

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        pub struct $name(pub u32);

        impl $name {
            pub fn index(self) -> usize {
                self.0 as usize
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }
    };
}

id_type!(
    /// Position of a job in the simulation's job table (not the trace's job id).
    JobIdx
);
id_type!(
    /// Global task slot, flattened across all jobs.
    TaskIdx
);
id_type!(ServerId);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EventKind {
    JobArrival {
        job: JobIdx,
    },
    /// `attempt` distinguishes a restarted task from its revoked predecessor.
    TaskStart {
        server: ServerId,
        task: TaskIdx,
        attempt: u32,
    },
    TaskFinish {
        server: ServerId,
        task: TaskIdx,
        attempt: u32,
    },
    ServerProvisioned {
        server: ServerId,
    },
    ServerDrainComplete {
        server: ServerId,
    },
    ServerRevocationWarning {
        server: ServerId,
    },
    ServerRevoked {
        server: ServerId,
    },
    SimEnd,
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::JobArrival { .. } => "JobArrival",
            EventKind::TaskStart { .. } => "TaskStart",
            EventKind::TaskFinish { .. } => "TaskFinish",
            EventKind::ServerProvisioned { .. } => "ServerProvisioned",
            EventKind::ServerDrainComplete { .. } => "ServerDrainComplete",
            EventKind::ServerRevocationWarning { .. } => "ServerRevocationWarning",
            EventKind::ServerRevoked { .. } => "ServerRevoked",
            EventKind::SimEnd => "SimEnd",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SimEvent {
    pub time: SimTime,
    pub seq: u64,
    pub kind: EventKind,
}

impl Ord for SimEvent {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time.cmp(&other.time).then(self.seq.cmp(&other.seq))
    }
}

impl PartialOrd for SimEvent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// One line of the debug event log: `time seq kind key=value...`.
impl fmt::Display for SimEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.time, self.seq, self.kind.name())?;
        match self.kind {
            EventKind::JobArrival { job } => write!(f, " job={job}"),
            EventKind::TaskStart {
                server,
                task,
                attempt,
            }
            | EventKind::TaskFinish {
                server,
                task,
                attempt,
            } => {
                write!(f, " server={server} task={task} attempt={attempt}")
            }
            EventKind::ServerProvisioned { server }
            | EventKind::ServerDrainComplete { server }
            | EventKind::ServerRevocationWarning { server }
            | EventKind::ServerRevoked { server } => write!(f, " server={server}"),
            EventKind::SimEnd => Ok(()),
        }
    }
}
