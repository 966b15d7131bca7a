//! Per-task and per-server records, delay distributions and transient cost
//! accounting.

use std::collections::BTreeMap;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::cluster::{Provenance, Server};
use crate::simcore::{ServerId, SimTime};
use crate::workload::JobClass;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TaskRecord {
    pub job_id: u64,
    pub task_id: u32,
    pub class: JobClass,
    pub submit: SimTime,
    /// Start of the attempt that completed.
    pub start: SimTime,
    pub finish: SimTime,
    pub server_id: ServerId,
    pub provenance: Provenance,
}

impl TaskRecord {
    pub fn queueing_delay(&self) -> SimTime {
        self.start - self.submit
    }
}

/// Lifecycle of one server as metrics sees it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ServerRecord {
    pub server_id: ServerId,
    pub provenance: Provenance,
    pub requested_at: SimTime,
    pub provisioned_at: Option<SimTime>,
    pub retired_at: Option<SimTime>,
    pub revoked: bool,
}

impl ServerRecord {
    pub fn from_server(s: &Server) -> Self {
        ServerRecord {
            server_id: s.id,
            provenance: s.provenance,
            requested_at: s.requested_at,
            provisioned_at: s.provisioned_at,
            retired_at: s.retired_at,
            revoked: s.revoked,
        }
    }

    /// Lifetime with open servers closed at `end`.
    pub fn lifetime(&self, end: SimTime) -> Option<SimTime> {
        let start = self.provisioned_at?;
        Some(self.retired_at.unwrap_or(end).max(start) - start)
    }
}

/// Empirical CDF: one point per distinct value, `fraction = count(<= v) / n`.
pub fn cdf(values: &[f64]) -> Vec<(f64, f64)> {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (i, x) in v.iter().enumerate() {
        let frac = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == *x => last.1 = frac,
            _ => out.push((*x, frac)),
        }
    }
    out
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct DelaySummary {
    pub count: usize,
    pub mean_s: f64,
    pub max_s: f64,
    #[serde(skip)]
    pub cdf: Vec<(f64, f64)>,
}

fn summarize(delays: Vec<f64>) -> DelaySummary {
    if delays.is_empty() {
        return DelaySummary::default();
    }
    let count = delays.len();
    let mean_s = delays.iter().sum::<f64>() / count as f64;
    let max_s = delays.iter().cloned().fold(0.0, f64::max);
    DelaySummary {
        count,
        mean_s,
        max_s,
        cdf: cdf(&delays),
    }
}

/// Task-level queueing delay statistics; `None` takes every class.
pub fn summarize_delays(records: &[TaskRecord], class: Option<JobClass>) -> DelaySummary {
    summarize(
        records
            .iter()
            .filter(|r| class.is_none_or(|c| r.class == c))
            .map(|r| r.queueing_delay().as_secs_f64())
            .collect(),
    )
}

/// Job-level view: each job's delay is the largest delay among its tasks.
pub fn summarize_job_delays(records: &[TaskRecord], class: Option<JobClass>) -> DelaySummary {
    let mut per_job: BTreeMap<u64, SimTime> = BTreeMap::new();
    for r in records
        .iter()
        .filter(|r| class.is_none_or(|c| r.class == c))
    {
        let e = per_job.entry(r.job_id).or_default();
        *e = (*e).max(r.queueing_delay());
    }
    summarize(per_job.values().map(|d| d.as_secs_f64()).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    /// Time-weighted mean of provisioned, unretired transient servers.
    pub avg_active_transient: f64,
    pub max_active_transient: u32,
    /// `avg_active_transient / r`.
    pub r_normalized_on_demand: f64,
    /// On-demand servers the baseline spends on the replaceable share, `p N`.
    pub baseline_replaced: f64,
    pub savings_fraction: f64,
    /// Set when no transient server ever ran; `savings_fraction` is then 1.0
    /// by convention.
    pub no_transients: bool,
}

impl CostReport {
    pub fn new(avg_active: f64, max_active: u32, r: f64, p: f64, n: u32) -> Self {
        let r_normalized = avg_active / r;
        let baseline_replaced = p * n as f64;
        let no_transients = max_active == 0;
        let savings_fraction = if no_transients || baseline_replaced == 0.0 {
            1.0
        } else {
            1.0 - r_normalized / baseline_replaced
        };
        CostReport {
            avg_active_transient: avg_active,
            max_active_transient: max_active,
            r_normalized_on_demand: r_normalized,
            baseline_replaced,
            savings_fraction,
            no_transients,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransientUsage {
    pub lifetimes: usize,
    pub revoked: usize,
    pub avg_lifetime_h: f64,
    pub max_lifetime_h: f64,
    /// Sum of all transient lifetimes in microseconds.
    pub server_micros: u128,
    pub avg_active: f64,
    pub cost: CostReport,
}

/// Lifetime and cost statistics for transient servers over `[0, end]`.
pub fn transient_usage(
    servers: &[ServerRecord],
    end: SimTime,
    r: f64,
    p: f64,
    n: u32,
) -> TransientUsage {
    let transients: Vec<&ServerRecord> = servers
        .iter()
        .filter(|s| s.provenance == Provenance::Transient && s.provisioned_at.is_some())
        .collect();
    let lifetimes: Vec<SimTime> = transients.iter().filter_map(|s| s.lifetime(end)).collect();
    let server_micros: u128 = lifetimes.iter().map(|l| l.as_micros() as u128).sum();
    let avg_active = if end == SimTime::ZERO {
        0.0
    } else {
        server_micros as f64 / end.as_micros() as f64
    };

    // step function of the live count; retirements sort before
    // provisionings at the same instant
    let mut steps: Vec<(SimTime, i32)> = Vec::with_capacity(2 * transients.len());
    for s in &transients {
        let start = s.provisioned_at.expect("filtered");
        steps.push((start, 1));
        steps.push((s.retired_at.unwrap_or(end).max(start), -1));
    }
    steps.sort();
    let mut live = 0i32;
    let mut max_active = 0i32;
    for (_, d) in steps {
        live += d;
        max_active = max_active.max(live);
    }

    let hours: Vec<f64> = lifetimes.iter().map(|l| l.as_hours_f64()).collect();
    TransientUsage {
        lifetimes: lifetimes.len(),
        revoked: transients.iter().filter(|s| s.revoked).count(),
        avg_lifetime_h: if hours.is_empty() {
            0.0
        } else {
            hours.iter().sum::<f64>() / hours.len() as f64
        },
        max_lifetime_h: hours.iter().cloned().fold(0.0, f64::max),
        server_micros,
        avg_active,
        cost: CostReport::new(avg_active, max_active as u32, r, p, n),
    }
}

/// Running area under the live-transient count, kept by the simulation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ActiveTracker {
    last: SimTime,
    live: u32,
    pub max: u32,
    /// Server-microseconds accumulated up to `last`.
    pub area: u128,
}

impl ActiveTracker {
    pub fn change(&mut self, now: SimTime, up: bool) {
        self.advance(now);
        if up {
            self.live += 1;
            self.max = self.max.max(self.live);
        } else {
            self.live -= 1;
        }
    }

    pub fn advance(&mut self, now: SimTime) {
        self.area += (now - self.last).as_micros() as u128 * self.live as u128;
        self.last = now;
    }

    pub fn live(&self) -> u32 {
        self.live
    }
}

pub fn write_tasks_csv<W: Write>(records: &[TaskRecord], mut out: W) -> io::Result<()> {
    writeln!(
        out,
        "job_id,task_id,class,submit_s,start_s,finish_s,server_id,provenance"
    )?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.job_id, r.task_id, r.class, r.submit, r.start, r.finish, r.server_id, r.provenance
        )?;
    }
    out.flush()
}

pub fn write_cdf_csv<W: Write>(points: &[(f64, f64)], mut out: W) -> io::Result<()> {
    writeln!(out, "delay_s,fraction")?;
    for (v, f) in points {
        writeln!(out, "{v:.3},{f:.6}")?;
    }
    out.flush()
}

pub fn write_transients_csv<W: Write>(
    servers: &[ServerRecord],
    end: SimTime,
    mut out: W,
) -> io::Result<()> {
    writeln!(
        out,
        "server_id,requested_s,provisioned_s,retired_s,lifetime_h,revoked"
    )?;
    for s in servers
        .iter()
        .filter(|s| s.provenance == Provenance::Transient)
    {
        let opt = |t: Option<SimTime>| t.map(|t| t.to_string()).unwrap_or_default();
        let life = s
            .lifetime(end)
            .map(|l| format!("{:.2}", l.as_hours_f64()))
            .unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{}",
            s.server_id,
            s.requested_at,
            opt(s.provisioned_at),
            opt(s.retired_at),
            life,
            s.revoked
        )?;
    }
    out.flush()
}
