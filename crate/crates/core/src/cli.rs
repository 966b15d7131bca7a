//! Run orchestration: single runs, r-sweeps and trace analysis, plus the
//! files each one leaves behind.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{echo, Mode, RunConfig};
use crate::metrics::{write_cdf_csv, write_tasks_csv, write_transients_csv, DelaySummary};
use crate::sim::{RunOutput, RunReport, RunStats, Simulation};
use crate::simcore::SimTime;
use crate::transient::Capacity;
use crate::workload::{concurrency_profile, ConcurrencyProfile, JobSpec};
use crate::{Error, Result};

fn round_to(v: f64, places: i32) -> f64 {
    let m = 10f64.powi(places);
    (v * m).round() / m
}

#[derive(Clone, Debug, Serialize)]
pub struct DelayLine {
    pub count: usize,
    pub mean_s: f64,
    pub max_s: f64,
}

impl From<&DelaySummary> for DelayLine {
    fn from(d: &DelaySummary) -> Self {
        DelayLine {
            count: d.count,
            mean_s: round_to(d.mean_s, 3),
            max_s: round_to(d.max_s, 3),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TransientLine {
    pub lifetimes: usize,
    pub revoked: usize,
    pub avg_lifetime_h: f64,
    pub max_lifetime_h: f64,
    pub avg_active_transient: f64,
    pub max_active_transient: u32,
    pub r_normalized_on_demand: f64,
    pub baseline_replaced: f64,
    pub savings_fraction: f64,
    pub no_transients: bool,
}

/// Contents of `summary.json`.
#[derive(Clone, Debug, Serialize)]
pub struct Summary {
    pub mode: Mode,
    pub seed: u64,
    pub capacity: Capacity,
    pub sim_end_s: f64,
    pub short_tasks: DelayLine,
    pub long_tasks: DelayLine,
    pub short_jobs: DelayLine,
    pub long_jobs: DelayLine,
    pub transient: TransientLine,
    pub counts: RunStats,
    /// Every setting as `[key, value]`, in the order they must be applied.
    pub config: Vec<(String, String)>,
}

impl Summary {
    pub fn new(cfg: &RunConfig, out: &RunOutput, report: &RunReport) -> Self {
        let t = &report.transient;
        Summary {
            mode: cfg.mode,
            seed: cfg.seed,
            capacity: out.capacity,
            sim_end_s: round_to(out.end.as_secs_f64(), 3),
            short_tasks: (&report.short_tasks).into(),
            long_tasks: (&report.long_tasks).into(),
            short_jobs: (&report.short_jobs).into(),
            long_jobs: (&report.long_jobs).into(),
            transient: TransientLine {
                lifetimes: t.lifetimes,
                revoked: t.revoked,
                avg_lifetime_h: round_to(t.avg_lifetime_h, 2),
                max_lifetime_h: round_to(t.max_lifetime_h, 2),
                avg_active_transient: round_to(t.cost.avg_active_transient, 3),
                max_active_transient: t.cost.max_active_transient,
                r_normalized_on_demand: round_to(t.cost.r_normalized_on_demand, 3),
                baseline_replaced: t.cost.baseline_replaced,
                savings_fraction: round_to(t.cost.savings_fraction, 4),
                no_transients: t.cost.no_transients,
            },
            counts: out.stats,
            config: echo(cfg),
        }
    }
}

/// One finished run with everything needed to write its artifacts.
pub struct RunResult {
    pub config: RunConfig,
    pub jobs: Vec<JobSpec>,
    pub output: RunOutput,
    pub report: RunReport,
}

impl RunResult {
    pub fn summary(&self) -> Summary {
        Summary::new(&self.config, &self.output, &self.report)
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).map_err(|e| Error::io(path, e))?,
    ))
}

fn io_at(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::io(path, e)
}

/// Runs `cfg` and, when `out_dir` is given, writes its artifacts there.
pub fn run(cfg: &RunConfig, out_dir: Option<&Path>) -> Result<RunResult> {
    cfg.validate()?;
    let jobs = cfg.load_jobs()?;
    let mut sim = Simulation::new(cfg, &jobs);
    if let (true, Some(dir)) = (cfg.debug_events, out_dir) {
        fs::create_dir_all(dir).map_err(io_at(dir))?;
        sim.set_event_log(Box::new(create(&dir.join("events.log"))?));
    }
    let output = sim.run()?;
    let report = output.report(cfg);
    let result = RunResult {
        config: cfg.clone(),
        jobs,
        output,
        report,
    };
    if let Some(dir) = out_dir {
        write_outputs(&result, dir)?;
    }
    Ok(result)
}

/// Writes `summary.json`, `tasks.csv`, `cdf_short.csv` and
/// `transients.csv` into `dir`.
pub fn write_outputs(result: &RunResult, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_at(dir))?;
    let p = dir.join("summary.json");
    let mut json =
        serde_json::to_string_pretty(&result.summary()).map_err(|e| Error::Logic(e.to_string()))?;
    json.push('\n');
    fs::write(&p, json).map_err(io_at(&p))?;

    let p = dir.join("tasks.csv");
    let mut w = create(&p)?;
    write_tasks_csv(&result.output.records, &mut w).map_err(io_at(&p))?;
    w.flush().map_err(io_at(&p))?;

    let p = dir.join("cdf_short.csv");
    let mut w = create(&p)?;
    write_cdf_csv(&result.report.short_tasks.cdf, &mut w).map_err(io_at(&p))?;
    w.flush().map_err(io_at(&p))?;

    let p = dir.join("transients.csv");
    let mut w = create(&p)?;
    write_transients_csv(&result.output.servers, result.output.end, &mut w).map_err(io_at(&p))?;
    w.flush().map_err(io_at(&p))?;
    Ok(())
}

/// One row of `comparison.csv`.
#[derive(Clone, Debug)]
pub struct SweepRow {
    pub label: String,
    pub mode: Mode,
    pub r: f64,
    pub k: u32,
    pub short_mean_s: f64,
    pub short_max_s: f64,
    pub long_mean_s: f64,
    pub avg_lifetime_h: f64,
    pub max_lifetime_h: f64,
    pub avg_active: f64,
    pub r_normalized: f64,
    pub savings_fraction: f64,
}

impl SweepRow {
    fn new(label: String, r: &RunResult) -> Self {
        let t = &r.report.transient;
        SweepRow {
            label,
            mode: r.config.mode,
            r: r.config.cost.r,
            k: r.output.capacity.k,
            short_mean_s: r.report.short_tasks.mean_s,
            short_max_s: r.report.short_tasks.max_s,
            long_mean_s: r.report.long_tasks.mean_s,
            avg_lifetime_h: t.avg_lifetime_h,
            max_lifetime_h: t.max_lifetime_h,
            avg_active: t.cost.avg_active_transient,
            r_normalized: t.cost.r_normalized_on_demand,
            savings_fraction: t.cost.savings_fraction,
        }
    }
}

pub fn write_comparison<W: Write>(rows: &[SweepRow], mut out: W) -> std::io::Result<()> {
    writeln!(
        out,
        "run,mode,r,K,short_mean_s,short_max_s,long_mean_s,avg_lifetime_h,max_lifetime_h,avg_active,r_normalized,savings_fraction"
    )?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{:.3},{:.3},{:.3},{:.2},{:.2},{:.3},{:.3},{:.4}",
            r.label,
            r.mode,
            r.r,
            r.k,
            r.short_mean_s,
            r.short_max_s,
            r.long_mean_s,
            r.avg_lifetime_h,
            r.max_lifetime_h,
            r.avg_active,
            r.r_normalized,
            r.savings_fraction
        )?;
    }
    Ok(())
}

/// Directory label for one sweep entry, e.g. `r3` or `r1.5`.
pub fn sweep_label(r: f64) -> String {
    format!("r{r}")
}

/// Runs `base` once per value of `r`, plus a baseline run if asked, each
/// in its own subdirectory of `out_dir`, and writes `comparison.csv`.
pub fn sweep(
    base: &RunConfig,
    rs: &[f64],
    with_baseline: bool,
    out_dir: Option<&Path>,
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    let mut entries: Vec<(String, RunConfig)> = Vec::new();
    if with_baseline {
        let mut c = base.clone();
        c.mode = Mode::Baseline;
        entries.push(("baseline".to_string(), c));
    }
    for &r in rs {
        let mut c = base.clone();
        c.cost.r = r;
        entries.push((sweep_label(r), c));
    }
    for (label, cfg) in entries {
        let dir: Option<PathBuf> = out_dir.map(|d| d.join(&label));
        let result = run(&cfg, dir.as_deref())?;
        rows.push(SweepRow::new(label, &result));
    }
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(io_at(dir))?;
        let p = dir.join("comparison.csv");
        let mut w = create(&p)?;
        write_comparison(&rows, &mut w).map_err(io_at(&p))?;
        w.flush().map_err(io_at(&p))?;
    }
    Ok(rows)
}

/// Splits `1,2,3` into values of `r`.
pub fn parse_r_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| {
            v.parse::<f64>()
                .map_err(|_| Error::config("r", format!("`{v}` is not a number")))
        })
        .collect()
}

pub fn analyze(jobs: &[JobSpec], fine_s: u64, coarse_s: u64) -> Result<ConcurrencyProfile> {
    if fine_s == 0 || coarse_s == 0 || !coarse_s.is_multiple_of(fine_s) {
        return Err(Error::config(
            "coarse-window-s",
            "windows must be positive and the coarse window a multiple of the fine one",
        ));
    }
    Ok(concurrency_profile(
        jobs,
        SimTime::from_secs(fine_s),
        SimTime::from_secs(coarse_s),
    ))
}

/// `window_start_s,concurrent_tasks` rows followed by summary comments.
pub fn write_profile<W: Write>(p: &ConcurrencyProfile, mut out: W) -> std::io::Result<()> {
    writeln!(out, "window_start_s,concurrent_tasks")?;
    for (i, v) in p.values.iter().enumerate() {
        writeln!(out, "{},{:.6}", p.window_start(i).as_secs_f64(), v)?;
    }
    writeln!(out, "# mean {:.6}", p.mean)?;
    writeln!(out, "# stddev {:.6}", p.std_dev)?;
    writeln!(out, "# max_min_ratio {:.6}", p.max_min_ratio())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Preset;
    use crate::workload::DEFAULT_CUTOFF;

    #[test]
    fn labels_and_r_lists() {
        assert_eq!(sweep_label(3.0), "r3");
        assert_eq!(sweep_label(1.5), "r1.5");
        assert_eq!(parse_r_list("1, 2,3").unwrap(), vec![1.0, 2.0, 3.0]);
        assert!(parse_r_list("1,x").is_err());
    }

    #[test]
    fn single_task_profile() {
        let jobs = vec![JobSpec::new(
            1,
            SimTime::ZERO,
            &[SimTime::from_secs(100)],
            DEFAULT_CUTOFF,
        )];
        let p = analyze(&jobs, 100, 100).unwrap();
        assert_eq!(p.values, vec![1.0]);
        let mut buf = Vec::new();
        write_profile(&p, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(
            text.starts_with("window_start_s,concurrent_tasks\n0,1.000000\n"),
            "{text}"
        );
        assert!(text.contains("# mean 1.000000"));
    }

    #[test]
    fn empty_profile() {
        let p = analyze(&[], 100, 14_400).unwrap();
        assert!(p.values.is_empty());
        assert_eq!(p.mean, 0.0);
        assert!(analyze(&[], 100, 150).is_err());
    }

    #[test]
    fn summary_echo_reports_budget() {
        let mut c = RunConfig::preset(Preset::Desk);
        c.set("N", "80").unwrap();
        c.set("generate", "horizon-s=600").unwrap();
        let r = run(&c, None).unwrap();
        let s = r.summary();
        assert_eq!((s.capacity.k, s.capacity.t), (120, 160));
        assert!(s.config.iter().any(|(k, v)| k == "N" && v == "80"));
    }
}
