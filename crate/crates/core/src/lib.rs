//! Discrete-event simulator of a hybrid datacenter scheduler whose
//! short-job partition grows and shrinks with transient servers.
//!
//! A run places short jobs by probing with long-task avoidance and long jobs
//! centrally, then either keeps a static short-only partition (baseline) or
//! swaps part of it for a budget of transient servers that is resized from
//! the fraction of servers holding long work.

pub mod cli;
pub mod cluster;
pub mod config;
mod error;
pub mod metrics;
pub mod sched;
pub mod sim;
pub mod simcore;
pub mod transient;
pub mod workload;

pub use config::{Mode, Preset, RunConfig};
pub use error::{Error, Result};
pub use sim::{simulate, RunOutput, RunReport, RunStats, Simulation};
