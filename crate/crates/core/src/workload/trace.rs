//! Flat trace format, one job per line:
//!
//! ```text
//! # job_id submit_time_s num_tasks dur_1 ... dur_n
//! 1 0.0 2 10.0 12.0
//! ```
//!
//! Everything after `#` is ignored. Times are decimal seconds, kept to the
//! microsecond.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::JobSpec;
use crate::simcore::SimTime;
use crate::{Error, Result};

fn bad(line: usize, field: &'static str, msg: impl Into<String>) -> Error {
    Error::Trace {
        line,
        field,
        msg: msg.into(),
    }
}

fn parse_secs(tok: &str, line: usize, field: &'static str) -> Result<SimTime> {
    let v: f64 = tok
        .parse()
        .map_err(|_| bad(line, field, format!("`{tok}` is not a decimal number")))?;
    SimTime::from_secs_f64(v)
        .ok_or_else(|| bad(line, field, format!("`{tok}` is negative or out of range")))
}

/// Parses a whole trace and returns jobs sorted by `(submit_time, job_id)`.
pub fn parse_trace<R: BufRead>(source: R, cutoff: SimTime) -> Result<Vec<JobSpec>> {
    let mut jobs = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in source.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| bad(lineno, "line", e.to_string()))?;
        let content = line.split('#').next().unwrap_or("");
        let mut toks = content.split_whitespace();
        let Some(id_tok) = toks.next() else { continue };

        let job_id: u64 = id_tok.parse().map_err(|_| {
            bad(
                lineno,
                "job_id",
                format!("`{id_tok}` is not an unsigned integer"),
            )
        })?;
        if !seen.insert(job_id) {
            return Err(bad(lineno, "job_id", format!("duplicate job id {job_id}")));
        }
        let submit = parse_secs(
            toks.next()
                .ok_or_else(|| bad(lineno, "submit_time", "missing"))?,
            lineno,
            "submit_time",
        )?;
        let n_tok = toks
            .next()
            .ok_or_else(|| bad(lineno, "num_tasks", "missing"))?;
        let n: usize = n_tok.parse().map_err(|_| {
            bad(
                lineno,
                "num_tasks",
                format!("`{n_tok}` is not an unsigned integer"),
            )
        })?;
        if n == 0 {
            return Err(bad(lineno, "num_tasks", "a job needs at least one task"));
        }

        let mut durations = Vec::with_capacity(n);
        for tok in toks.by_ref() {
            let d = parse_secs(tok, lineno, "duration")?;
            if d == SimTime::ZERO {
                return Err(bad(lineno, "duration", format!("`{tok}` is not positive")));
            }
            durations.push(d);
        }
        if durations.len() != n {
            return Err(bad(
                lineno,
                "duration",
                format!("num_tasks is {n} but {} durations given", durations.len()),
            ));
        }
        jobs.push(JobSpec::new(job_id, submit, &durations, cutoff));
    }
    jobs.sort_by_key(|j| (j.submit_time, j.job_id));
    Ok(jobs)
}

pub fn parse_trace_str(text: &str, cutoff: SimTime) -> Result<Vec<JobSpec>> {
    parse_trace(text.as_bytes(), cutoff)
}

pub fn read_trace_file(path: &Path, cutoff: SimTime) -> Result<Vec<JobSpec>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_trace(BufReader::new(f), cutoff)
}

/// Writes jobs in the same grammar [`parse_trace`] reads.
pub fn serialize_trace<W: Write>(jobs: &[JobSpec], mut out: W) -> std::io::Result<()> {
    writeln!(out, "# job_id submit_time_s num_tasks durations_s...")?;
    for job in jobs {
        write!(
            out,
            "{} {} {}",
            job.job_id,
            job.submit_time,
            job.tasks.len()
        )?;
        for t in &job.tasks {
            write!(out, " {}", t.duration)?;
        }
        writeln!(out)?;
    }
    out.flush()
}

pub fn write_trace_file(jobs: &[JobSpec], path: &Path) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    serialize_trace(jobs, BufWriter::new(f)).map_err(|e| Error::io(path, e))
}
