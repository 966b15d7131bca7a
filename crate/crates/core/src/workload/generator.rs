use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use super::JobSpec;
use crate::simcore::{rng_from_seed, SimRng, SimTime};
use crate::{Error, Result};

/// One segment of the arrival-rate schedule. The schedule repeats.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    /// `None` means the phase never ends.
    pub length_s: Option<f64>,
    pub multiplier: f64,
}

impl Phase {
    pub fn steady() -> Self {
        Phase {
            length_s: None,
            multiplier: 1.0,
        }
    }
}

/// Truncated Pareto over task counts: `floor(X)` with `X ~ Pareto(min, shape)`
/// conditioned on `X <= cap`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskCountDist {
    pub shape: f64,
    pub min: u32,
    pub cap: u32,
}

impl Default for TaskCountDist {
    /// Mean 35 tasks per job, at most 49960.
    fn default() -> Self {
        TaskCountDist {
            shape: 0.777,
            min: 1,
            cap: 49_960,
        }
    }
}

impl TaskCountDist {
    pub fn sample(&self, rng: &mut SimRng) -> u32 {
        let m = self.min as f64;
        let tail = (m / self.cap as f64).powf(self.shape);
        let u: f64 = rng.random();
        let x = m * (1.0 - u * (1.0 - tail)).powf(-1.0 / self.shape);
        (x.floor() as u32).clamp(self.min, self.cap)
    }
}

/// Per-class mean task duration; each task draws uniformly from
/// `[0.5 * mean, 1.5 * mean]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DurationMeans {
    pub short_s: f64,
    pub long_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    /// Jobs per second before phase modulation.
    pub mean_arrival_rate: f64,
    pub phases: Vec<Phase>,
    pub task_count: TaskCountDist,
    pub durations: DurationMeans,
    pub long_job_fraction: f64,
    pub seed: u64,
    /// Arrivals are generated on `[0, horizon_s)`.
    pub horizon_s: f64,
    pub max_jobs: Option<u64>,
    pub cutoff_s: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            mean_arrival_rate: 0.1,
            phases: vec![Phase::steady()],
            task_count: TaskCountDist::default(),
            durations: DurationMeans {
                short_s: 10.0,
                long_s: 1800.0,
            },
            long_job_fraction: 0.02,
            seed: 1,
            horizon_s: 86_400.0,
            max_jobs: None,
            cutoff_s: 90.0,
        }
    }
}

fn positive(key: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::config(key, format!("must be positive, got {v}")))
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        positive("rate", self.mean_arrival_rate)?;
        if self.phases.is_empty() {
            return Err(Error::config("phases", "at least one phase required"));
        }
        for p in &self.phases {
            positive("phases", p.multiplier)?;
            if let Some(len) = p.length_s {
                positive("phases", len)?;
            }
        }
        positive("task-shape", self.task_count.shape)?;
        if self.task_count.min < 1 || self.task_count.cap < self.task_count.min {
            return Err(Error::config("task-cap", "need 1 <= task-min <= task-cap"));
        }
        positive("short-mean-s", self.durations.short_s)?;
        positive("long-mean-s", self.durations.long_s)?;
        if !(0.0..=1.0).contains(&self.long_job_fraction) {
            return Err(Error::config("long-fraction", "must lie in [0, 1]"));
        }
        if self.horizon_s.is_nan() || self.horizon_s < 0.0 {
            return Err(Error::config("horizon-s", "must be non-negative"));
        }
        positive("cutoff-s", self.cutoff_s)?;
        Ok(())
    }

    /// Applies one `key=value` override as accepted by `--generate`. The
    /// seed and cutoff follow the run and are not settable here.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let num = |v: &str| -> Result<f64> {
            v.parse::<f64>()
                .map_err(|_| Error::config(key, format!("`{v}` is not a number")))
        };
        let int = |v: &str| -> Result<u64> {
            v.parse::<u64>()
                .map_err(|_| Error::config(key, format!("`{v}` is not an unsigned integer")))
        };
        match key {
            "rate" => self.mean_arrival_rate = num(value)?,
            "phases" => self.phases = parse_phases(value).map_err(|m| Error::config(key, m))?,
            "task-shape" => self.task_count.shape = num(value)?,
            "task-min" => self.task_count.min = int(value)? as u32,
            "task-cap" => self.task_count.cap = int(value)? as u32,
            "short-mean-s" => self.durations.short_s = num(value)?,
            "long-mean-s" => self.durations.long_s = num(value)?,
            "long-fraction" => self.long_job_fraction = num(value)?,
            "horizon-s" => self.horizon_s = num(value)?,
            "max-jobs" => self.max_jobs = Some(int(value)?),
            _ => return Err(Error::config(key, "unknown generator key")),
        }
        Ok(())
    }
}

/// `len:mult;len:mult;...` with `inf` allowed as a length.
pub fn parse_phases(s: &str) -> std::result::Result<Vec<Phase>, String> {
    s.split(';')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            let (len, mult) = p
                .split_once(':')
                .ok_or_else(|| format!("phase `{p}` is not `length:multiplier`"))?;
            let length_s = match len.trim() {
                "inf" => None,
                l => Some(
                    l.parse::<f64>()
                        .map_err(|_| format!("bad phase length `{l}`"))?,
                ),
            };
            let multiplier = mult
                .trim()
                .parse::<f64>()
                .map_err(|_| format!("bad phase multiplier `{mult}`"))?;
            Ok(Phase {
                length_s,
                multiplier,
            })
        })
        .collect()
}

pub fn format_phases(phases: &[Phase]) -> String {
    phases
        .iter()
        .map(|p| match p.length_s {
            Some(l) => format!("{l}:{}", p.multiplier),
            None => format!("inf:{}", p.multiplier),
        })
        .collect::<Vec<_>>()
        .join(";")
}

fn draw_duration(rng: &mut SimRng, mean_s: f64) -> SimTime {
    let s = rng.random_range(0.5 * mean_s..=1.5 * mean_s);
    SimTime::from_secs_f64(s)
        .filter(|t| *t > SimTime::ZERO)
        .unwrap_or(SimTime::from_micros(1))
}

/// Synthesizes a job stream. Arrivals form a Poisson process whose rate is
/// `mean_arrival_rate` times the multiplier of the current phase; a draw
/// that would cross a phase boundary restarts at the boundary under the new
/// rate.
pub fn generate(cfg: &GeneratorConfig) -> Result<Vec<JobSpec>> {
    cfg.validate()?;
    let mut rng = rng_from_seed(cfg.seed);
    let cutoff = SimTime::from_secs_f64(cfg.cutoff_s).expect("validated");
    let max_jobs = cfg.max_jobs.unwrap_or(u64::MAX);

    let mut jobs = Vec::new();
    let mut t = 0.0f64;
    let mut phase = 0usize;
    let mut phase_end = cfg.phases[0].length_s.unwrap_or(f64::INFINITY);
    while (jobs.len() as u64) < max_jobs {
        let rate = cfg.mean_arrival_rate * cfg.phases[phase].multiplier;
        let gap = Exp::new(rate).expect("positive rate").sample(&mut rng);
        if t + gap >= phase_end {
            t = phase_end;
            phase = (phase + 1) % cfg.phases.len();
            phase_end = t + cfg.phases[phase].length_s.unwrap_or(f64::INFINITY);
            if t >= cfg.horizon_s {
                break;
            }
            continue;
        }
        t += gap;
        if t >= cfg.horizon_s {
            break;
        }

        let long = rng.random_bool(cfg.long_job_fraction);
        let mean = if long {
            cfg.durations.long_s
        } else {
            cfg.durations.short_s
        };
        let n = cfg.task_count.sample(&mut rng);
        let durations: Vec<_> = (0..n).map(|_| draw_duration(&mut rng, mean)).collect();
        let submit = SimTime::from_secs_f64(t).expect("finite non-negative");
        jobs.push(JobSpec::new(
            jobs.len() as u64 + 1,
            submit,
            &durations,
            cutoff,
        ));
    }
    Ok(jobs)
}
