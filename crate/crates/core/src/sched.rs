//! Hybrid placement: a centralized least-work placer for long jobs and
//! power-of-d probing with long-task avoidance for short jobs.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::cluster::ClusterView;
use crate::simcore::{ServerId, SimRng, SimTime};
use crate::workload::{JobClass, JobSpec};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchedulerConfig {
    pub probe_count: u32,
    /// Skip probed servers that hold a long task.
    pub avoidance: bool,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        SchedulerConfig {
            probe_count: 2,
            avoidance: true,
        }
    }
}

/// `(task ordinal within the job, target server)`.
pub type Assignment = (u32, ServerId);

/// Sends each task, in order, to the general server with the least
/// remaining work, counting the tasks already assigned from this job.
pub fn place_long_job<V: ClusterView>(job: &JobSpec, view: &V) -> Result<Vec<Assignment>> {
    debug_assert_eq!(job.class, JobClass::Long);
    let general = view.general_servers();
    if general.is_empty() {
        return Err(Error::config(
            "general",
            "long job arrived but the general partition is empty",
        ));
    }
    let mut heap: BinaryHeap<Reverse<(SimTime, ServerId)>> = general
        .iter()
        .map(|&id| Reverse((view.remaining_work(id), id)))
        .collect();
    let mut out = Vec::with_capacity(job.tasks.len());
    for t in &job.tasks {
        let Reverse((work, id)) = heap.pop().expect("non-empty");
        out.push((t.task_id, id));
        heap.push(Reverse((work + t.duration, id)));
    }
    Ok(out)
}

/// Places a short job one task at a time.
///
/// Each task probes `probe_count` distinct general servers. With avoidance
/// on, probes holding a long task are dropped; the least loaded survivor
/// wins. If none survive the task goes to the least loaded short-only
/// server, and if that partition is empty, to the least loaded probe.
pub fn place_short_job<V: ClusterView>(
    job: &JobSpec,
    view: &V,
    cfg: &SchedulerConfig,
    rng: &mut SimRng,
) -> Result<Vec<Assignment>> {
    debug_assert_eq!(job.class, JobClass::Short);
    let general = view.general_servers();
    let short = view.short_servers();
    if general.is_empty() && short.is_empty() {
        return Err(Error::config(
            "cluster",
            "short job arrived but no server accepts tasks",
        ));
    }
    // work added by earlier tasks of this job
    let mut added: HashMap<ServerId, SimTime> = HashMap::new();
    let work = |id: ServerId, added: &HashMap<ServerId, SimTime>| {
        view.remaining_work(id) + added.get(&id).copied().unwrap_or_default()
    };
    let least = |ids: &mut dyn Iterator<Item = ServerId>, added: &HashMap<ServerId, SimTime>| {
        ids.map(|id| (work(id, added), id)).min().map(|(_, id)| id)
    };

    let d = (cfg.probe_count.max(1) as usize).min(general.len());
    let mut out = Vec::with_capacity(job.tasks.len());
    let mut probes = Vec::with_capacity(d);
    for t in &job.tasks {
        probes.clear();
        if d > 0 {
            probes.extend(
                index::sample(rng, general.len(), d)
                    .iter()
                    .map(|i| general[i]),
            );
        }
        let survivor = least(
            &mut probes
                .iter()
                .copied()
                .filter(|&id| !(cfg.avoidance && view.has_long_task(id))),
            &added,
        );
        let target = survivor
            .or_else(|| least(&mut short.iter().copied(), &added))
            .or_else(|| least(&mut probes.iter().copied(), &added))
            .expect("some server exists");
        *added.entry(target).or_default() += t.duration;
        out.push((t.task_id, target));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::{ClusterSnapshot, Partition, Provenance, ServerState, ServerView};
    use crate::simcore::rng_from_seed;
    use crate::workload::DEFAULT_CUTOFF;
    use proptest::prelude::*;

    fn view(id: u32, partition: Partition, work: u64, long: bool) -> ServerView {
        ServerView {
            id: ServerId(id),
            partition,
            provenance: Provenance::OnDemand,
            state: ServerState::Active,
            queue_len: 0,
            remaining_work: SimTime::from_secs(work),
            has_long_task: long,
        }
    }

    fn snap(views: Vec<ServerView>) -> ClusterSnapshot {
        ClusterSnapshot::from_views(SimTime::ZERO, views, false)
    }

    fn job(durs: &[u64], long: bool) -> JobSpec {
        let d: Vec<_> = durs.iter().map(|&s| SimTime::from_secs(s)).collect();
        let mut j = JobSpec::new(1, SimTime::ZERO, &d, DEFAULT_CUTOFF);
        j.class = if long {
            JobClass::Long
        } else {
            JobClass::Short
        };
        j
    }

    #[test]
    fn long_task_goes_to_idle_server() {
        let s = snap(vec![
            view(0, Partition::General, 50, false),
            view(1, Partition::General, 0, false),
        ]);
        assert_eq!(
            place_long_job(&job(&[100], true), &s).unwrap(),
            vec![(0, ServerId(1))]
        );
    }

    #[test]
    fn equal_long_tasks_spread() {
        let s = snap(vec![
            view(0, Partition::General, 0, false),
            view(1, Partition::General, 0, false),
        ]);
        let a = place_long_job(&job(&[100, 100], true), &s).unwrap();
        assert_eq!(a, vec![(0, ServerId(0)), (1, ServerId(1))]);
    }

    #[test]
    fn long_jobs_never_touch_short_partition() {
        let s = snap(vec![
            view(0, Partition::General, 1000, true),
            view(1, Partition::ShortOnly, 0, false),
        ]);
        let a = place_long_job(&job(&[100, 100, 100], true), &s).unwrap();
        assert!(a.iter().all(|&(_, id)| id == ServerId(0)));
        let empty = snap(vec![view(0, Partition::ShortOnly, 0, false)]);
        assert!(place_long_job(&job(&[100], true), &empty).is_err());
    }

    #[test]
    fn blocked_probes_fall_back_to_short_partition() {
        let s = snap(vec![
            view(0, Partition::General, 10, true),
            view(1, Partition::General, 10, true),
            view(2, Partition::ShortOnly, 0, false),
        ]);
        let mut rng = rng_from_seed(1);
        let a =
            place_short_job(&job(&[5], false), &s, &SchedulerConfig::default(), &mut rng).unwrap();
        assert_eq!(a, vec![(0, ServerId(2))]);
    }

    #[test]
    fn idle_probes_tie_to_lower_id() {
        let s = snap(vec![
            view(0, Partition::General, 0, false),
            view(1, Partition::General, 0, false),
        ]);
        let mut rng = rng_from_seed(3);
        let a =
            place_short_job(&job(&[5], false), &s, &SchedulerConfig::default(), &mut rng).unwrap();
        assert_eq!(a, vec![(0, ServerId(0))]);
    }

    #[test]
    fn without_avoidance_least_loaded_probe_wins() {
        let s = snap(vec![
            view(0, Partition::General, 9, true),
            view(1, Partition::General, 4, true),
        ]);
        let cfg = SchedulerConfig {
            probe_count: 2,
            avoidance: false,
        };
        let a = place_short_job(&job(&[5], false), &s, &cfg, &mut rng_from_seed(9)).unwrap();
        assert_eq!(a, vec![(0, ServerId(1))]);
    }

    #[test]
    fn no_short_partition_uses_least_loaded_probe() {
        let s = snap(vec![
            view(0, Partition::General, 9, true),
            view(1, Partition::General, 4, true),
        ]);
        let a = place_short_job(
            &job(&[5], false),
            &s,
            &SchedulerConfig::default(),
            &mut rng_from_seed(2),
        )
        .unwrap();
        assert_eq!(a, vec![(0, ServerId(1))]);
    }

    #[test]
    fn later_tasks_see_earlier_assignments() {
        let s = snap(vec![
            view(0, Partition::General, 0, true),
            view(1, Partition::ShortOnly, 0, false),
            view(2, Partition::ShortOnly, 0, false),
        ]);
        let a = place_short_job(
            &job(&[5, 5, 5], false),
            &s,
            &SchedulerConfig::default(),
            &mut rng_from_seed(2),
        )
        .unwrap();
        assert_eq!(
            a,
            vec![(0, ServerId(1)), (1, ServerId(2)), (2, ServerId(1))]
        );
    }

    /// Greedy least-work by exhaustive scan, ignoring the heap.
    fn greedy_oracle(works: &[u64], durs: &[u64]) -> Vec<u32> {
        let mut w = works.to_vec();
        durs.iter()
            .map(|&d| {
                let (i, _) = w.iter().enumerate().min_by_key(|&(i, &x)| (x, i)).unwrap();
                w[i] += d;
                i as u32
            })
            .collect()
    }

    proptest! {
        #[test]
        fn long_placement_matches_greedy_scan(
            works in prop::collection::vec(0u64..500, 1..12),
            durs in prop::collection::vec(1u64..300, 1..30),
        ) {
            let views = works.iter().enumerate().map(|(i, &w)| view(i as u32, Partition::General, w, false)).collect();
            let a = place_long_job(&job(&durs, true), &snap(views)).unwrap();
            let got: Vec<u32> = a.iter().map(|&(_, id)| id.0).collect();
            prop_assert_eq!(got, greedy_oracle(&works, &durs));
        }

        #[test]
        fn short_placement_never_lands_behind_long_when_short_partition_exists(
            longs in prop::collection::vec(any::<bool>(), 1..10),
            n_short in 1usize..4,
            seed in any::<u64>(),
        ) {
            let mut views: Vec<_> = longs.iter().enumerate().map(|(i, &l)| view(i as u32, Partition::General, 30, l)).collect();
            for k in 0..n_short {
                views.push(view((longs.len() + k) as u32, Partition::ShortOnly, 0, false));
            }
            let s = snap(views);
            let a = place_short_job(&job(&[1, 2, 3, 4], false), &s, &SchedulerConfig::default(), &mut rng_from_seed(seed)).unwrap();
            for (_, id) in a {
                prop_assert!(!s.servers[id.index()].has_long_task);
            }
        }
    }
}
