//! Job streams: the flat trace format, the bursty synthetic generator, the
//! short/long classification rule and the unlimited-resource concurrency
//! profile.

mod generator;
mod profile;
mod trace;

pub use generator::{
    format_phases, generate, parse_phases, DurationMeans, GeneratorConfig, Phase, TaskCountDist,
};
pub use profile::{concurrency_profile, ConcurrencyProfile};
pub use trace::{parse_trace, parse_trace_str, read_trace_file, serialize_trace, write_trace_file};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::simcore::SimTime;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobClass {
    Short,
    Long,
}

impl fmt::Display for JobClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            JobClass::Short => "short",
            JobClass::Long => "long",
        })
    }
}

impl FromStr for JobClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "short" => Ok(JobClass::Short),
            "long" => Ok(JobClass::Long),
            other => Err(format!("unknown job class `{other}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TaskSpec {
    /// Ordinal within the job.
    pub task_id: u32,
    pub duration: SimTime,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct JobSpec {
    pub job_id: u64,
    pub submit_time: SimTime,
    pub tasks: Vec<TaskSpec>,
    pub class: JobClass,
}

impl JobSpec {
    /// Builds a job and classifies it against `cutoff`. `durations` must be non-empty.
    pub fn new(job_id: u64, submit_time: SimTime, durations: &[SimTime], cutoff: SimTime) -> Self {
        let tasks = durations
            .iter()
            .enumerate()
            .map(|(i, &duration)| TaskSpec {
                task_id: i as u32,
                duration,
            })
            .collect();
        JobSpec {
            job_id,
            submit_time,
            tasks,
            class: classify_job(durations, cutoff),
        }
    }

    pub fn durations(&self) -> impl Iterator<Item = SimTime> + '_ {
        self.tasks.iter().map(|t| t.duration)
    }

    pub fn total_work(&self) -> SimTime {
        self.durations().sum()
    }

    pub fn reclassify(&mut self, cutoff: SimTime) {
        let durs: Vec<_> = self.durations().collect();
        self.class = classify_job(&durs, cutoff);
    }
}

/// Default short/long boundary on mean task duration.
pub const DEFAULT_CUTOFF: SimTime = SimTime::from_secs(90);

/// Long iff the mean task duration is at least `cutoff`.
///
/// Compared as `sum >= cutoff * n` in integer microseconds so the boundary
/// case is exact.
pub fn classify_job(durations: &[SimTime], cutoff: SimTime) -> JobClass {
    assert!(!durations.is_empty(), "a job needs at least one task");
    let sum: u128 = durations.iter().map(|d| d.as_micros() as u128).sum();
    if sum >= cutoff.as_micros() as u128 * durations.len() as u128 {
        JobClass::Long
    } else {
        JobClass::Short
    }
}
