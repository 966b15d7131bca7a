use super::JobSpec;
use crate::simcore::SimTime;

/// Average number of concurrently running tasks per coarse window, assuming
/// every task runs `[submit, submit + duration)` with no queueing.
#[derive(Clone, Debug, PartialEq)]
pub struct ConcurrencyProfile {
    pub fine_window: SimTime,
    pub coarse_window: SimTime,
    /// Task-microseconds falling in each coarse window.
    pub busy: Vec<u128>,
    pub values: Vec<f64>,
    pub mean: f64,
    pub std_dev: f64,
}

impl ConcurrencyProfile {
    pub fn window_start(&self, i: usize) -> SimTime {
        SimTime::from_micros(self.coarse_window.as_micros() * i as u64)
    }

    /// Largest window over the smallest, infinite if some window is empty.
    pub fn max_min_ratio(&self) -> f64 {
        let max = self
            .values
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        let min = self.values.iter().cloned().fold(f64::INFINITY, f64::min);
        if self.values.is_empty() {
            return 1.0;
        }
        if min <= 0.0 {
            f64::INFINITY
        } else {
            max / min
        }
    }
}

/// Fine windows are averaged first, then fine averages are averaged into
/// coarse windows. `coarse` must be a positive multiple of `fine`.
pub fn concurrency_profile(jobs: &[JobSpec], fine: SimTime, coarse: SimTime) -> ConcurrencyProfile {
    let f = fine.as_micros();
    let c = coarse.as_micros();
    assert!(
        f > 0 && c > 0 && c.is_multiple_of(f),
        "coarse window must be a multiple of the fine window"
    );

    let end = jobs
        .iter()
        .flat_map(|j| j.durations().map(move |d| j.submit_time + d))
        .max()
        .unwrap_or(SimTime::ZERO)
        .as_micros();
    let n_coarse = end.div_ceil(c) as usize;
    let per = (c / f) as usize;
    let mut fine_busy = vec![0u128; n_coarse * per];

    for job in jobs {
        let start = job.submit_time.as_micros();
        for d in job.durations() {
            let stop = start + d.as_micros();
            let mut w = (start / f) as usize;
            let mut lo = start;
            while lo < stop {
                let hi = ((w as u64 + 1) * f).min(stop);
                fine_busy[w] += (hi - lo) as u128;
                lo = hi;
                w += 1;
            }
        }
    }

    let fine_avg: Vec<f64> = fine_busy.iter().map(|&b| b as f64 / f as f64).collect();
    let values: Vec<f64> = fine_avg
        .chunks(per)
        .map(|ch| ch.iter().sum::<f64>() / per as f64)
        .collect();
    let busy: Vec<u128> = fine_busy.chunks(per).map(|ch| ch.iter().sum()).collect();

    let (mean, std_dev) = if values.is_empty() {
        (0.0, 0.0)
    } else {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        (mean, var.sqrt())
    };

    ConcurrencyProfile {
        fine_window: fine,
        coarse_window: coarse,
        busy,
        values,
        mean,
        std_dev,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::DEFAULT_CUTOFF;
    use proptest::prelude::*;

    fn job(id: u64, at: u64, durs: &[u64]) -> JobSpec {
        let d: Vec<_> = durs.iter().map(|&s| SimTime::from_secs(s)).collect();
        JobSpec::new(id, SimTime::from_secs(at), &d, DEFAULT_CUTOFF)
    }

    const W100: SimTime = SimTime::from_secs(100);

    #[test]
    fn single_task_fills_one_window() {
        let p = concurrency_profile(&[job(1, 0, &[100])], W100, W100);
        assert_eq!(p.values, vec![1.0]);
        assert_eq!(p.mean, 1.0);
    }

    #[test]
    fn overlapping_tasks_stack() {
        let p = concurrency_profile(&[job(1, 0, &[100, 100])], W100, W100);
        assert_eq!(p.values, vec![2.0]);
    }

    #[test]
    fn empty_input() {
        let p = concurrency_profile(&[], W100, W100);
        assert!(p.values.is_empty());
        assert_eq!((p.mean, p.std_dev), (0.0, 0.0));
    }

    /// Counts running tasks second by second, then averages per window.
    fn brute_force(jobs: &[JobSpec], coarse_s: u64) -> Vec<f64> {
        let end = jobs
            .iter()
            .flat_map(|j| {
                j.durations()
                    .map(move |d| (j.submit_time + d).as_micros() / 1_000_000)
            })
            .max()
            .unwrap_or(0);
        let windows = end.div_ceil(coarse_s);
        (0..windows)
            .map(|w| {
                let mut occupied = 0u64;
                for sec in w * coarse_s..(w + 1) * coarse_s {
                    for j in jobs {
                        let s = j.submit_time.as_micros() / 1_000_000;
                        for d in j.durations() {
                            let e = s + d.as_micros() / 1_000_000;
                            if s <= sec && sec < e {
                                occupied += 1;
                            }
                        }
                    }
                }
                occupied as f64 / coarse_s as f64
            })
            .collect()
    }

    proptest! {
        #[test]
        fn matches_per_second_occupancy(
            raw in prop::collection::vec((0u64..500, prop::collection::vec(1u64..300, 1..4)), 1..8),
            per in 1u64..4,
        ) {
            let jobs: Vec<_> = raw.iter().enumerate().map(|(i, (t, d))| job(i as u64, *t, d)).collect();
            let coarse = 50 * per;
            let p = concurrency_profile(&jobs, SimTime::from_secs(50), SimTime::from_secs(coarse));
            let oracle = brute_force(&jobs, coarse);
            prop_assert_eq!(p.values.len(), oracle.len());
            for (a, b) in p.values.iter().zip(&oracle) {
                prop_assert!((a - b).abs() < 1e-9, "{} vs {}", a, b);
            }
        }

        #[test]
        fn conserves_task_time(
            raw in prop::collection::vec((0u64..5_000_000_000, prop::collection::vec(1u64..900_000_000, 1..5)), 0..10),
        ) {
            let jobs: Vec<_> = raw
                .iter()
                .enumerate()
                .map(|(i, (t, d))| {
                    let d: Vec<_> = d.iter().map(|&us| SimTime::from_micros(us)).collect();
                    JobSpec::new(i as u64, SimTime::from_micros(*t), &d, DEFAULT_CUTOFF)
                })
                .collect();
            let p = concurrency_profile(&jobs, SimTime::from_secs(100), SimTime::from_secs(400));
            let total: u128 = jobs.iter().flat_map(|j| j.durations()).map(|d| d.as_micros() as u128).sum();
            prop_assert_eq!(p.busy.iter().sum::<u128>(), total);
            let approx: f64 = p.values.iter().map(|v| v * 400e6).sum();
            prop_assert!((approx - total as f64).abs() <= 1e-6 * (total as f64).max(1.0));
        }
    }
}
