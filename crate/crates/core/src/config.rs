//! Run configuration: presets, `key = value` files and flag overrides.
//!
//! Every setting has one textual key, shared by config files, command-line
//! flags and the echo written into `summary.json`.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cluster::ClusterLayout;
use crate::sched::SchedulerConfig;
use crate::simcore::SimTime;
use crate::transient::{Capacity, CostModel, PolicyConfig, Ratio, RevocationConfig};
use crate::workload::{
    format_phases, generate, read_trace_file, DurationMeans, GeneratorConfig, JobSpec, Phase,
    TaskCountDist,
};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Static short-only partition of `N` on-demand servers.
    Baseline,
    /// Part of the short-only partition is swapped for transient servers
    /// that follow the long-load ratio.
    Dynamic,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Baseline => "baseline",
            Mode::Dynamic => "cloudcoaster",
        })
    }
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "baseline" => Ok(Mode::Baseline),
            "cloudcoaster" | "dynamic" => Ok(Mode::Dynamic),
            _ => Err(format!(
                "unknown mode `{s}` (expected baseline or cloudcoaster)"
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Desk,
    Full,
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Desk => "desk",
            Preset::Full => "paper",
        })
    }
}

impl FromStr for Preset {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "desk" => Ok(Preset::Desk),
            "paper" => Ok(Preset::Full),
            _ => Err(format!("unknown preset `{s}` (expected desk or paper)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum WorkloadSource {
    Trace(PathBuf),
    Generate(GeneratorConfig),
}

/// The bursty synthetic workload used at desk scale.
///
/// Calm hours keep the general partition mostly free; a two hour burst of
/// large long jobs fills it and pushes short tasks toward the short-only
/// partition.
pub fn desk_workload() -> GeneratorConfig {
    GeneratorConfig {
        mean_arrival_rate: 0.05,
        phases: vec![
            Phase {
                length_s: Some(14_400.0),
                multiplier: 0.4,
            },
            Phase {
                length_s: Some(7_200.0),
                multiplier: 3.0,
            },
        ],
        task_count: TaskCountDist {
            shape: 0.777,
            min: 1,
            cap: 2_000,
        },
        durations: DurationMeans {
            short_s: 5.0,
            long_s: 2_400.0,
        },
        long_job_fraction: 0.08,
        seed: 1,
        horizon_s: 86_400.0,
        max_jobs: None,
        cutoff_s: 90.0,
    }
}

/// The desk workload with ten times the arrival rate and the full task cap,
/// sized for the 4000-server cluster.
pub fn full_scale_workload() -> GeneratorConfig {
    let mut g = desk_workload();
    g.mean_arrival_rate *= 10.0;
    g.task_count = TaskCountDist::default();
    g
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub preset: Preset,
    pub mode: Mode,
    pub general_on_demand: u32,
    pub cost: CostModel,
    pub policy: PolicyConfig,
    pub provision_delay_s: f64,
    pub scheduler: SchedulerConfig,
    pub cutoff_s: f64,
    pub count_draining_in_total: bool,
    pub workload: WorkloadSource,
    pub seed: u64,
    pub revocation: RevocationConfig,
    pub debug_events: bool,
    /// Compare incremental counters with a full rescan after every event.
    pub live_checks: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::preset(Preset::Desk)
    }
}

/// Keys accepted by [`RunConfig::set`], in echo order.
pub const KEYS: &[&str] = &[
    "preset",
    "mode",
    "general",
    "r",
    "p",
    "N",
    "threshold",
    "hysteresis",
    "max-actions",
    "provision-delay-s",
    "probe-count",
    "avoidance",
    "cutoff-s",
    "count-draining-in-total",
    "seed",
    "trace",
    "generate",
    "revocation",
    "revocation-mttf-s",
    "revocation-warning-s",
    "debug-events",
    "live-checks",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::config(key, format!("cannot parse `{value}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        v => Err(Error::config(key, format!("`{v}` is not a boolean"))),
    }
}

fn generator_pairs(g: &GeneratorConfig) -> Vec<(&'static str, String)> {
    let mut v = vec![
        ("rate", g.mean_arrival_rate.to_string()),
        ("phases", format_phases(&g.phases)),
        ("task-shape", g.task_count.shape.to_string()),
        ("task-min", g.task_count.min.to_string()),
        ("task-cap", g.task_count.cap.to_string()),
        ("short-mean-s", g.durations.short_s.to_string()),
        ("long-mean-s", g.durations.long_s.to_string()),
        ("long-fraction", g.long_job_fraction.to_string()),
        ("horizon-s", g.horizon_s.to_string()),
    ];
    if let Some(m) = g.max_jobs {
        v.push(("max-jobs", m.to_string()));
    }
    v
}

impl RunConfig {
    pub fn preset(preset: Preset) -> Self {
        let (general, n, workload) = match preset {
            Preset::Desk => (392, 8, desk_workload()),
            Preset::Full => (3_920, 80, full_scale_workload()),
        };
        RunConfig {
            preset,
            mode: Mode::Dynamic,
            general_on_demand: general,
            cost: CostModel { r: 3.0, n, p: 0.5 },
            policy: PolicyConfig::default(),
            provision_delay_s: 120.0,
            scheduler: SchedulerConfig::default(),
            cutoff_s: 90.0,
            count_draining_in_total: false,
            workload: WorkloadSource::Generate(workload),
            seed: 1,
            revocation: RevocationConfig::default(),
            debug_events: false,
            live_checks: false,
        }
    }

    /// Applies one setting. `preset` resets everything else to the preset's
    /// values, so it should come first.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "preset" => {
                let p: Preset = value.parse().map_err(|m: String| Error::config(key, m))?;
                *self = RunConfig::preset(p);
            }
            "mode" => self.mode = value.parse().map_err(|m: String| Error::config(key, m))?,
            "general" => self.general_on_demand = parse(key, value)?,
            "r" => self.cost.r = parse(key, value)?,
            "p" => self.cost.p = parse(key, value)?,
            "N" | "n" => self.cost.n = parse(key, value)?,
            "threshold" => {
                self.policy.threshold = value.parse().map_err(|m: String| Error::config(key, m))?
            }
            "hysteresis" => {
                self.policy.hysteresis = value.parse().map_err(|m: String| Error::config(key, m))?
            }
            "max-actions" => {
                self.policy.max_actions = match value {
                    "" | "none" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "provision-delay-s" => self.provision_delay_s = parse(key, value)?,
            "probe-count" => self.scheduler.probe_count = parse(key, value)?,
            "avoidance" => self.scheduler.avoidance = parse_bool(key, value)?,
            "cutoff-s" => self.cutoff_s = parse(key, value)?,
            "count-draining-in-total" => self.count_draining_in_total = parse_bool(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "trace" => self.workload = WorkloadSource::Trace(PathBuf::from(value)),
            "generate" => {
                let mut g = match &self.workload {
                    WorkloadSource::Generate(g) => g.clone(),
                    WorkloadSource::Trace(_) => match self.preset {
                        Preset::Desk => desk_workload(),
                        Preset::Full => full_scale_workload(),
                    },
                };
                for item in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                    let (k, v) = item
                        .split_once('=')
                        .ok_or_else(|| Error::config(key, format!("`{item}` is not key=value")))?;
                    g.set(k.trim(), v.trim())?;
                }
                self.workload = WorkloadSource::Generate(g);
            }
            "revocation" => self.revocation.enabled = parse_bool(key, value)?,
            "revocation-mttf-s" => {
                self.revocation.mttf_s = parse(key, value)?;
                self.revocation.enabled = true;
            }
            "revocation-warning-s" => self.revocation.warning_s = parse(key, value)?,
            "debug-events" => self.debug_events = parse_bool(key, value)?,
            "live-checks" => self.live_checks = parse_bool(key, value)?,
            _ => return Err(Error::config(key, "unknown configuration key")),
        }
        Ok(())
    }

    /// Every setting as `(key, value)`; feeding these back through
    /// [`RunConfig::set`] in order rebuilds an equal config.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        let mut v = vec![
            ("preset", self.preset.to_string()),
            ("mode", self.mode.to_string()),
            ("general", self.general_on_demand.to_string()),
            ("r", self.cost.r.to_string()),
            ("p", self.cost.p.to_string()),
            ("N", self.cost.n.to_string()),
            ("threshold", self.policy.threshold.to_string()),
            ("hysteresis", self.policy.hysteresis.to_string()),
            (
                "max-actions",
                self.policy
                    .max_actions
                    .map_or("none".to_string(), |m| m.to_string()),
            ),
            ("provision-delay-s", self.provision_delay_s.to_string()),
            ("probe-count", self.scheduler.probe_count.to_string()),
            ("avoidance", self.scheduler.avoidance.to_string()),
            ("cutoff-s", self.cutoff_s.to_string()),
            (
                "count-draining-in-total",
                self.count_draining_in_total.to_string(),
            ),
            ("seed", self.seed.to_string()),
        ];
        match &self.workload {
            WorkloadSource::Trace(p) => v.push(("trace", p.display().to_string())),
            WorkloadSource::Generate(g) => v.push((
                "generate",
                generator_pairs(g)
                    .into_iter()
                    .map(|(k, v)| format!("{k}={v}"))
                    .collect::<Vec<_>>()
                    .join(","),
            )),
        }
        v.push(("revocation-mttf-s", self.revocation.mttf_s.to_string()));
        v.push((
            "revocation-warning-s",
            self.revocation.warning_s.to_string(),
        ));
        // setting the mttf switches revocation on, so restate the switch
        v.push(("revocation", self.revocation.enabled.to_string()));
        v.push(("debug-events", self.debug_events.to_string()));
        v.push(("live-checks", self.live_checks.to_string()));
        v
    }

    /// Applies pairs in order, `preset` first if present.
    pub fn apply_pairs<'a, I>(&mut self, pairs: I) -> Result<()>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let pairs: Vec<_> = pairs.into_iter().collect();
        for (k, v) in pairs.iter().filter(|(k, _)| *k == "preset") {
            self.set(k, v)?;
        }
        for (k, v) in pairs.iter().filter(|(k, _)| *k != "preset") {
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.cost.validate().map_err(|m| Error::config("r", m))?;
        if self.general_on_demand == 0 {
            return Err(Error::config(
                "general",
                "the general partition needs at least one server",
            ));
        }
        if !(self.provision_delay_s.is_finite() && self.provision_delay_s >= 0.0) {
            return Err(Error::config(
                "provision-delay-s",
                "must be a non-negative number",
            ));
        }
        if self.scheduler.probe_count == 0 {
            return Err(Error::config("probe-count", "must be at least 1"));
        }
        if !(self.cutoff_s.is_finite() && self.cutoff_s > 0.0) {
            return Err(Error::config("cutoff-s", "must be positive"));
        }
        if Ratio::new(1, 1)
            .cmp_fraction(self.policy.threshold.num, self.policy.threshold.den)
            .is_gt()
        {
            return Err(Error::config("threshold", "must lie in [0, 1]"));
        }
        if self.revocation.enabled
            && !(self.revocation.mttf_s.is_finite() && self.revocation.mttf_s > 0.0)
        {
            return Err(Error::config("revocation-mttf-s", "must be positive"));
        }
        if !(self.revocation.warning_s.is_finite() && self.revocation.warning_s >= 0.0) {
            return Err(Error::config(
                "revocation-warning-s",
                "must be non-negative",
            ));
        }
        if let WorkloadSource::Generate(g) = &self.workload {
            self.generator(g).validate()?;
        }
        Ok(())
    }

    fn generator(&self, g: &GeneratorConfig) -> GeneratorConfig {
        GeneratorConfig {
            seed: self.seed,
            cutoff_s: self.cutoff_s,
            ..g.clone()
        }
    }

    pub fn cutoff(&self) -> SimTime {
        SimTime::from_secs_f64(self.cutoff_s).unwrap_or(SimTime::from_secs(90))
    }

    pub fn provision_delay(&self) -> SimTime {
        SimTime::from_secs_f64(self.provision_delay_s).unwrap_or(SimTime::ZERO)
    }

    /// Transient budget and partition sizes; baseline mode has no budget.
    pub fn capacity(&self) -> Capacity {
        let c = self.cost.capacity();
        match self.mode {
            Mode::Dynamic => c,
            Mode::Baseline => Capacity {
                k: 0,
                t: self.cost.n,
                retained_on_demand: self.cost.n,
            },
        }
    }

    pub fn layout(&self) -> ClusterLayout {
        ClusterLayout {
            general_on_demand: self.general_on_demand,
            short_on_demand: self.capacity().retained_on_demand,
            count_draining_in_total: self.count_draining_in_total,
        }
    }

    /// Loads or synthesizes the job list. Generated workloads use the run
    /// seed and cutoff.
    pub fn load_jobs(&self) -> Result<Vec<JobSpec>> {
        match &self.workload {
            WorkloadSource::Trace(p) => read_trace_file(p, self.cutoff()),
            WorkloadSource::Generate(g) => generate(&self.generator(g)),
        }
    }
}

/// Reads a config file: either `key = value` lines (with `#` comments) or a
/// `summary.json` written by an earlier run, whose `config` object is used.
pub fn read_config_file(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_text(&text)
}

pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>> {
    if text.trim_start().starts_with('{') {
        let v: serde_json::Value = serde_json::from_str(text)
            .map_err(|e| Error::config("config", format!("invalid JSON: {e}")))?;
        let obj = v
            .get("config")
            .and_then(|c| c.as_array())
            .ok_or_else(|| Error::config("config", "JSON file has no `config` array"))?;
        return obj
            .iter()
            .map(|pair| match pair.as_array().map(Vec::as_slice) {
                Some([serde_json::Value::String(k), serde_json::Value::String(v)]) => {
                    Ok((k.clone(), v.clone()))
                }
                _ => Err(Error::config(
                    "config",
                    "entries must be [key, value] string pairs",
                )),
            })
            .collect();
    }
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::config(
                format!("line {}", i + 1),
                format!("`{line}` is not key = value"),
            )
        })?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Echo used in `summary.json`.
pub fn echo(cfg: &RunConfig) -> Vec<(String, String)> {
    cfg.to_pairs()
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
}
