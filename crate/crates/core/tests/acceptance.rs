//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use spotsched::cli::{run, RunResult};
use spotsched::metrics::CostReport;
use spotsched::transient::{compute_capacity, revocation_probability, CostModel};
use spotsched::{Mode, Preset, RunConfig};

const SWEEP_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

/// Everything run so far, for the suite-wide checks.
#[derive(Default)]
struct Ledger {
    runs: Vec<(String, RunResult)>,
}

impl Ledger {
    fn run(&mut self, label: String, cfg: &RunConfig) -> Result<&RunResult, String> {
        let r = run(cfg, None).map_err(|e| format!("{label}: {e}"))?;
        self.runs.push((label, r));
        Ok(&self.runs.last().expect("just pushed").1)
    }
}

fn desk(mode: Mode, r: f64, seed: u64) -> RunConfig {
    let mut c = RunConfig::preset(Preset::Desk);
    c.mode = mode;
    c.cost.r = r;
    c.seed = seed;
    c
}

fn formula_exactness() -> Outcome {
    let t0 = Instant::now();
    let caps: Vec<_> = [1.0, 2.0, 3.0]
        .iter()
        .map(|&r| compute_capacity(&CostModel { r, n: 80, p: 0.5 }))
        .collect();
    let elapsed = t0.elapsed();
    let ks: Vec<u32> = caps.iter().map(|c| c.k).collect();
    let ts: Vec<u32> = caps.iter().map(|c| c.t).collect();
    let pass = ks == [40, 80, 120]
        && ts == [80, 120, 160]
        && ts[2] == 2 * 80
        && elapsed.as_micros() < 1000;
    outcome(
        pass,
        format!("K={ks:?} T={ts:?} in {}us", elapsed.as_micros()),
    )
}

fn long_load_oracle(ledger: &mut Ledger) -> Outcome {
    let t0 = Instant::now();
    let mut checks = 0u64;
    let mut events = 0u64;
    let mut runs = 0;
    for i in 0..12u64 {
        let mut c = desk(Mode::Dynamic, [1.0, 2.0, 3.0][(i % 3) as usize], 100 + i);
        c.live_checks = true;
        c.count_draining_in_total = i % 4 == 3;
        if i % 5 == 4 {
            c.revocation.enabled = true;
            c.revocation.mttf_s = 4.0 * 3600.0;
        }
        match ledger.run(format!("oracle seed {}", 100 + i), &c) {
            Ok(r) => {
                checks += r.output.stats.live_checks;
                // the final SimEnd dispatch is not followed by a check
                events += r.output.stats.events - 1;
                runs += 1;
            }
            Err(e) => return outcome(false, e),
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    outcome(
        checks == events && runs >= 10 && secs < 60.0,
        format!("{runs} runs, {checks} of {events} events rechecked, 0 mismatches, {secs:.1}s"),
    )
}

fn trend(ledger: &mut Ledger) -> Result<(Outcome, Outcome, Outcome), String> {
    let t0 = Instant::now();
    let mut short = [0.0f64; 4];
    let mut long = [0.0f64; 4];
    let mut exact = true;
    let mut savings_ok = true;
    let mut lifetimes_seen = 0usize;
    for &seed in &SWEEP_SEEDS {
        let entries = [
            (Mode::Baseline, 3.0),
            (Mode::Dynamic, 1.0),
            (Mode::Dynamic, 2.0),
            (Mode::Dynamic, 3.0),
        ];
        for (i, (mode, r)) in entries.into_iter().enumerate() {
            let res = ledger.run(
                format!("sweep {mode} r={r} seed {seed}"),
                &desk(mode, r, seed),
            )?;
            short[i] += res.report.short_tasks.mean_s / SWEEP_SEEDS.len() as f64;
            long[i] += res.report.long_tasks.mean_s / SWEEP_SEEDS.len() as f64;
            if mode == Mode::Dynamic {
                let c = res.report.transient.cost;
                exact &= c.r_normalized_on_demand == c.avg_active_transient / r;
                savings_ok &= c.savings_fraction > 0.0 && !c.no_transients;
                lifetimes_seen += res.report.transient.lifetimes;
            }
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    let [base, r1, r2, r3] = short;
    let c5 = outcome(
        r3 < r2 && r2 < r1 && r3 <= 0.5 * base && (r1 - base).abs() <= 0.25 * base && secs <= 300.0,
        format!(
            "short mean baseline {base:.1}s, r1 {r1:.1}s ({:+.1}%), r2 {r2:.1}s, r3 {r3:.1}s ({:.2}x baseline), {secs:.1}s",
            100.0 * (r1 / base - 1.0),
            r3 / base
        ),
    );
    let drift = long[3] / long[0] - 1.0;
    let c6 = outcome(
        drift.abs() <= 0.10,
        format!(
            "long mean baseline {:.1}s, r3 {:.1}s ({:+.2}%)",
            long[0],
            long[3],
            100.0 * drift
        ),
    );
    let table = CostReport::new(84.5, 120, 3.0, 0.5, 80);
    let table_ok = ((table.r_normalized_on_demand * 10.0).round() / 10.0 - 28.2).abs() < 1e-9;
    let c7 = outcome(
        exact && savings_ok && table_ok && lifetimes_seen > 0,
        format!(
            "r_normalized exact: {exact}, savings > 0 in every run: {savings_ok}, 84.5/3 -> {:.1}",
            table.r_normalized_on_demand
        ),
    );
    Ok((c5, c6, c7))
}

fn revocation(ledger: &mut Ledger) -> Result<Outcome, String> {
    let mttf = 18.0 * 3600.0;
    let mut n = 0usize;
    let mut revoked = 0usize;
    let mut expected = 0.0;
    let mut var = 0.0;
    let mut exposure = 0.0;
    for seed in 1..=6u64 {
        let mut c = desk(Mode::Dynamic, 3.0, 500 + seed);
        c.revocation.enabled = true;
        c.revocation.mttf_s = mttf;
        c.set("generate", "horizon-s=345600")
            .map_err(|e| e.to_string())?;
        let res = ledger.run(format!("revocation seed {}", 500 + seed), &c)?;
        let end = res.output.end;
        for s in res
            .output
            .servers
            .iter()
            .filter(|s| s.provisioned_at.is_some())
        {
            if s.provenance != spotsched::cluster::Provenance::Transient {
                continue;
            }
            let life = s.lifetime(end).expect("provisioned");
            let p = revocation_probability(life, mttf);
            n += 1;
            expected += p;
            exposure += life.as_secs_f64() / mttf;
            var += p * (1.0 - p);
            revoked += s.revoked as usize;
        }
    }
    let se = var.sqrt();
    let z = (revoked as f64 - expected) / se;
    Ok(outcome(
        n >= 1000 && z.abs() <= 3.0,
        format!(
            "{n} lifetimes, {revoked} revoked, {expected:.1} expected, z = {z:+.2}; exposure sum L/mttf = {exposure:.1}"
        ),
    ))
}

fn determinism(scratch: &Path) -> Outcome {
    let mut rev = desk(Mode::Dynamic, 3.0, 7);
    rev.revocation.enabled = true;
    rev.revocation.mttf_s = 3.0 * 3600.0;
    let cases = [
        ("baseline", desk(Mode::Baseline, 3.0, 7)),
        ("r3", desk(Mode::Dynamic, 3.0, 7)),
        ("revocation", rev),
    ];
    let mut same = 0;
    for (name, cfg) in &cases {
        let a = scratch.join(format!("{name}-a"));
        let b = scratch.join(format!("{name}-b"));
        if run(cfg, Some(&a)).is_err() || run(cfg, Some(&b)).is_err() {
            return outcome(false, format!("{name}: run failed"));
        }
        let identical = ["summary.json", "cdf_short.csv"].iter().all(|f| {
            fs::read(a.join(f)).ok().is_some()
                && fs::read(a.join(f)).ok() == fs::read(b.join(f)).ok()
        });
        same += identical as usize;
    }
    outcome(
        same == cases.len(),
        format!("{same}/{} configurations byte-identical", cases.len()),
    )
}

fn main() -> ExitCode {
    // cargo passes harness flags such as --nocapture or a filter; only run
    // when unfiltered or asked for by name
    let args: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    if !args.is_empty() && !args.iter().any(|a| "acceptance".contains(a.as_str())) {
        return ExitCode::SUCCESS;
    }
    let scratch = tempfile::tempdir().expect("temp dir");
    let mut ledger = Ledger::default();
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();

    results.push((1, "formula exactness", formula_exactness()));
    results.push((2, "l_r oracle", long_load_oracle(&mut ledger)));
    match trend(&mut ledger) {
        Ok((c5, c6, c7)) => {
            results.push((5, "trend reproduction", c5));
            results.push((6, "long-job neutrality", c6));
            results.push((7, "cost accounting", c7));
        }
        Err(e) => {
            for (i, name) in [
                (5, "trend reproduction"),
                (6, "long-job neutrality"),
                (7, "cost accounting"),
            ] {
                results.push((i, name, outcome(false, e.clone())));
            }
        }
    }
    results.push((
        9,
        "revocation sanity",
        revocation(&mut ledger).unwrap_or_else(|e| outcome(false, e)),
    ));
    results.push((8, "determinism", determinism(scratch.path())));

    // suite-wide checks over every run above
    let mut over_budget = 0;
    let mut unbalanced = 0;
    for (_, r) in &ledger.runs {
        let s = r.output.stats;
        let cap = r.output.capacity;
        if s.max_transient_fleet > cap.k || s.max_short_partition > cap.t {
            over_budget += 1;
        }
        let total: u64 = r.jobs.iter().map(|j| j.tasks.len() as u64).sum();
        let recorded = r.output.records.len() as u64;
        if !(s.arrived_tasks == total
            && s.started_tasks == total
            && s.completed_tasks == total
            && recorded == total)
        {
            unbalanced += 1;
        }
    }
    let n = ledger.runs.len();
    let revocation_runs = ledger
        .runs
        .iter()
        .filter(|(_, r)| r.config.revocation.enabled)
        .count();
    results.push((
        3,
        "budget safety",
        outcome(
            over_budget == 0 && n > 0,
            format!("{n} runs, {over_budget} over K or T"),
        ),
    ));
    results.push((
        4,
        "conservation",
        outcome(
            unbalanced == 0 && revocation_runs > 0,
            format!("{n} runs ({revocation_runs} with revocation), {unbalanced} unbalanced"),
        ),
    ));

    results.sort_by_key(|(i, _, _)| *i);
    let mut failed = 0;
    for (i, name, o) in &results {
        println!(
            "criterion {i} {name}: {} ({})",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        failed += !o.pass as usize;
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
