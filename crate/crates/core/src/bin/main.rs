use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use spotsched::cli::{analyze, parse_r_list, run, sweep, write_profile};
use spotsched::config::{read_config_file, Preset};
use spotsched::workload::{read_trace_file, write_trace_file, DEFAULT_CUTOFF};
use spotsched::{Error, Result, RunConfig};

#[derive(Parser)]
#[command(
    name = "spotsched",
    version,
    about = "Hybrid cluster scheduler simulator with a transient short partition"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one configuration, or an r-sweep when `--r` lists several values.
    Run(Box<RunArgs>),
    /// Concurrency profile of a trace under unlimited resources.
    AnalyzeTrace(AnalyzeArgs),
    /// Write a synthetic trace file.
    Generate(GenerateArgs),
}

#[derive(Args)]
struct RunArgs {
    /// `key = value` file, or a summary.json from an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Generator overrides, `key=value,key=value`.
    #[arg(long)]
    generate: Option<String>,
    /// Cost ratio; a comma list runs a sweep.
    #[arg(long)]
    r: Option<String>,
    #[arg(long)]
    p: Option<String>,
    #[arg(long = "N")]
    n: Option<String>,
    #[arg(long)]
    general: Option<String>,
    #[arg(long)]
    threshold: Option<String>,
    #[arg(long)]
    hysteresis: Option<String>,
    #[arg(long = "provision-delay-s")]
    provision_delay_s: Option<String>,
    #[arg(long = "probe-count")]
    probe_count: Option<String>,
    #[arg(long = "cutoff-s")]
    cutoff_s: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Enables revocation with this mean time to failure.
    #[arg(long = "revocation-mttf-s")]
    revocation_mttf_s: Option<String>,
    #[arg(long = "revocation-warning-s")]
    revocation_warning_s: Option<String>,
    /// Write every dispatched event to `events.log`.
    #[arg(long = "debug-events")]
    debug_events: bool,
    /// Recount the long load after every event and fail on mismatch.
    #[arg(long = "live-checks")]
    live_checks: bool,
    /// Add a baseline run to a sweep.
    #[arg(long = "with-baseline")]
    with_baseline: bool,
    /// Any other setting, `key=value`; may repeat.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct AnalyzeArgs {
    trace: PathBuf,
    #[arg(long = "fine-window-s", default_value_t = 100)]
    fine_window_s: u64,
    #[arg(long = "coarse-window-s", default_value_t = 14_400)]
    coarse_window_s: u64,
    #[arg(long = "cutoff-s", default_value_t = 90.0)]
    cutoff_s: f64,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    generate: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long = "cutoff-s")]
    cutoff_s: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

fn split_pair(s: &str) -> Result<(String, String)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| Error::config(s, "expected key=value"))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

fn run_cmd(a: RunArgs) -> Result<()> {
    let mut pairs: Vec<(String, String)> = match &a.config {
        Some(p) => read_config_file(p)?,
        None => Vec::new(),
    };
    let flags: [(&str, Option<String>); 15] = [
        ("preset", a.preset),
        ("mode", a.mode),
        ("trace", a.trace.map(|p| p.display().to_string())),
        ("generate", a.generate),
        ("r", a.r),
        ("p", a.p),
        ("N", a.n),
        ("general", a.general),
        ("threshold", a.threshold),
        ("hysteresis", a.hysteresis),
        ("provision-delay-s", a.provision_delay_s),
        ("probe-count", a.probe_count),
        ("cutoff-s", a.cutoff_s),
        ("seed", a.seed),
        ("revocation-mttf-s", a.revocation_mttf_s),
    ];
    pairs.extend(
        flags
            .into_iter()
            .filter_map(|(k, v)| v.map(|v| (k.to_string(), v))),
    );
    if let Some(w) = a.revocation_warning_s {
        pairs.push(("revocation-warning-s".into(), w));
    }
    for s in &a.set {
        pairs.push(split_pair(s)?);
    }
    if a.debug_events {
        pairs.push(("debug-events".into(), "true".into()));
    }
    if a.live_checks {
        pairs.push(("live-checks".into(), "true".into()));
    }

    let mut out = a.out;
    let mut with_baseline = a.with_baseline;
    let mut rs: Option<Vec<f64>> = None;
    let mut rest = Vec::new();
    for (k, v) in pairs {
        match k.as_str() {
            "out" => out = PathBuf::from(v),
            "with-baseline" => with_baseline = matches!(v.as_str(), "true" | "1" | "yes" | "on"),
            "r" if v.contains(',') => rs = Some(parse_r_list(&v)?),
            "r" => {
                rs = None;
                rest.push((k, v));
            }
            _ => rest.push((k, v)),
        }
    }
    let mut cfg = RunConfig::preset(Preset::Desk);
    cfg.apply_pairs(rest.iter().map(|(k, v)| (k.as_str(), v.as_str())))?;

    match rs {
        Some(rs) => {
            let rows = sweep(&cfg, &rs, with_baseline, Some(&out))?;
            for r in rows {
                println!(
                    "{:<10} K={:<4} short mean {:>9.3}s  long mean {:>9.3}s  avg_active {:>7.3}  savings {:>7.4}",
                    r.label, r.k, r.short_mean_s, r.long_mean_s, r.avg_active, r.savings_fraction
                );
            }
            println!("wrote {}", out.join("comparison.csv").display());
        }
        None => {
            let res = run(&cfg, Some(&out))?;
            let s = res.summary();
            println!(
                "{} K={} T={}: {} tasks, short mean {:.3}s max {:.3}s, long mean {:.3}s, avg_active {:.3}",
                s.mode,
                s.capacity.k,
                s.capacity.t,
                s.counts.completed_tasks,
                s.short_tasks.mean_s,
                s.short_tasks.max_s,
                s.long_tasks.mean_s,
                s.transient.avg_active_transient
            );
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}

fn analyze_cmd(a: AnalyzeArgs) -> Result<()> {
    let cutoff = spotsched::simcore::SimTime::from_secs_f64(a.cutoff_s).unwrap_or(DEFAULT_CUTOFF);
    let jobs = read_trace_file(&a.trace, cutoff)?;
    let profile = analyze(&jobs, a.fine_window_s, a.coarse_window_s)?;
    match a.out {
        Some(p) => {
            let f = File::create(&p).map_err(|e| Error::io(&p, e))?;
            let mut w = BufWriter::new(f);
            write_profile(&profile, &mut w)
                .and_then(|_| w.flush())
                .map_err(|e| Error::io(&p, e))?;
        }
        None => {
            let stdout = std::io::stdout();
            write_profile(&profile, stdout.lock()).map_err(|e| Error::io("stdout", e))?;
        }
    }
    eprintln!(
        "max/min coarse window ratio: {:.3}",
        profile.max_min_ratio()
    );
    Ok(())
}

fn generate_cmd(a: GenerateArgs) -> Result<()> {
    let mut cfg = RunConfig::preset(Preset::Desk);
    let pairs = [
        ("preset", a.preset),
        ("generate", a.generate),
        ("seed", a.seed),
        ("cutoff-s", a.cutoff_s),
    ];
    let pairs: Vec<(&str, String)> = pairs
        .into_iter()
        .filter_map(|(k, v)| v.map(|v| (k, v)))
        .collect();
    cfg.apply_pairs(pairs.iter().map(|(k, v)| (*k, v.as_str())))?;
    cfg.validate()?;
    let jobs = cfg.load_jobs()?;
    write_trace_file(&jobs, &a.out)?;
    println!("wrote {} jobs to {}", jobs.len(), a.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Run(a) => run_cmd(*a),
        Command::AnalyzeTrace(a) => analyze_cmd(a),
        Command::Generate(a) => generate_cmd(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
