use std::collections::HashSet;

use proptest::prelude::*;

use spotsched::cluster::Provenance;
use spotsched::simcore::SimTime;
use spotsched::transient::Ratio;
use spotsched::workload::{generate, GeneratorConfig, JobClass, Phase, TaskCountDist};
use spotsched::{Mode, RunConfig, Simulation};

fn small(
    mode: Mode,
    seed: u64,
    r: f64,
    threshold: (u64, u64),
    revocation: bool,
) -> (RunConfig, GeneratorConfig) {
    let mut c = RunConfig {
        mode,
        seed,
        general_on_demand: 12,
        ..RunConfig::default()
    };
    c.cost.n = 4;
    c.cost.r = r;
    c.policy.threshold = Ratio::new(threshold.0, threshold.1);
    c.provision_delay_s = 30.0;
    c.live_checks = true;
    if revocation {
        c.revocation.enabled = true;
        c.revocation.mttf_s = 900.0;
        c.revocation.warning_s = 20.0;
    }
    let g = GeneratorConfig {
        mean_arrival_rate: 0.05,
        phases: vec![
            Phase {
                length_s: Some(1200.0),
                multiplier: 0.5,
            },
            Phase {
                length_s: Some(600.0),
                multiplier: 3.0,
            },
        ],
        task_count: TaskCountDist {
            shape: 0.9,
            min: 1,
            cap: 40,
        },
        long_job_fraction: 0.2,
        horizon_s: 5400.0,
        seed,
        cutoff_s: 90.0,
        ..GeneratorConfig::default()
    };
    (c, g)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_runs_conserve_tasks_and_respect_budgets(
        seed in 0u64..10_000,
        r in prop::sample::select(vec![1.0, 1.5, 2.0, 3.0]),
        thr in prop::sample::select(vec![(1u64, 2u64), (3, 4), (19, 20)]),
        revocation in any::<bool>(),
        baseline in any::<bool>(),
    ) {
        let mode = if baseline { Mode::Baseline } else { Mode::Dynamic };
        let (cfg, g) = small(mode, seed, r, thr, revocation);
        let jobs = generate(&g).unwrap();
        let total: usize = jobs.iter().map(|j| j.tasks.len()).sum();
        let out = Simulation::new(&cfg, &jobs).run().unwrap();

        prop_assert_eq!(out.records.len(), total);
        prop_assert_eq!(out.stats.completed_tasks as usize, total);
        prop_assert_eq!(out.stats.live_checks, out.stats.events - 1);
        let mut seen = HashSet::new();
        for rec in &out.records {
            prop_assert!(rec.submit <= rec.start && rec.start <= rec.finish);
            prop_assert!(seen.insert((rec.job_id, rec.task_id)));
            if rec.class == JobClass::Long {
                prop_assert_eq!(rec.provenance, Provenance::OnDemand);
            }
        }
        let cap = cfg.capacity();
        prop_assert!(out.stats.max_transient_fleet <= cap.k);
        prop_assert!(out.stats.max_short_partition <= cap.t);
        if baseline {
            prop_assert!(out.servers.iter().all(|s| s.provenance == Provenance::OnDemand));
        }
        // every transient is retired by the end of a run
        for s in out.servers.iter().filter(|s| s.provenance == Provenance::Transient) {
            prop_assert!(s.retired_at.is_some());
            prop_assert!(s.retired_at.unwrap() <= out.end);
        }
        let report = out.report(&cfg);
        prop_assert_eq!(report.transient.server_micros, out.tracker.area);
    }
}

#[test]
fn empty_workload_ends_at_zero() {
    let (cfg, _) = small(Mode::Dynamic, 1, 3.0, (19, 20), false);
    let out = Simulation::new(&cfg, &[]).run().unwrap();
    assert_eq!(out.end, SimTime::ZERO);
    assert!(out.records.is_empty());
    let report = out.report(&cfg);
    assert!(report.transient.cost.no_transients);
    assert_eq!(report.transient.cost.savings_fraction, 1.0);
}

#[test]
fn lower_threshold_recruits_transients_sooner() {
    let (mut cfg, g) = small(Mode::Dynamic, 3, 3.0, (19, 20), false);
    let jobs = generate(&g).unwrap();
    let strict = Simulation::new(&cfg, &jobs).run().unwrap();
    cfg.policy.threshold = Ratio::new(1, 4);
    let eager = Simulation::new(&cfg, &jobs).run().unwrap();
    let area = |o: &spotsched::RunOutput| o.tracker.area;
    assert!(eager.stats.transient_requests > 0);
    assert!(area(&eager) >= area(&strict));
}
