//! Transient capacity management.
//!
//! The manager watches the long-load ratio `l_r = n_long / n_total` and
//! grows the short-only partition with transient servers while `l_r` sits
//! above the threshold, shrinking it again when `l_r` falls below. The
//! policy here is pure: it emits [`Action`]s and the simulation applies them.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::cluster::{ClusterSnapshot, Provenance, ServerState};
use crate::simcore::{ServerId, SimRng, SimTime};

/// Exact non-negative fraction, parsed from decimal text so that `0.95`
/// means 95/100 rather than the nearest binary double.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Ratio {
    pub num: u64,
    pub den: u64,
}

impl Ratio {
    pub const ZERO: Ratio = Ratio { num: 0, den: 1 };

    /// Builds `num / den` in lowest terms.
    pub fn new(num: u64, den: u64) -> Self {
        assert!(den > 0, "zero denominator");
        let g = gcd(num as u128, den as u128) as u64;
        Ratio {
            num: num / g,
            den: den / g,
        }
    }

    pub fn as_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// Compares `a / b` against `self`; `0 / 0` counts as zero.
    pub fn cmp_fraction(self, a: u64, b: u64) -> Ordering {
        if b == 0 {
            return 0u64.cmp(&self.num);
        }
        (a as u128 * self.den as u128).cmp(&(self.num as u128 * b as u128))
    }

    /// `self - other`, saturating at zero.
    pub fn saturating_sub(self, other: Ratio) -> Ratio {
        let lhs = self.num as u128 * other.den as u128;
        let rhs = other.num as u128 * self.den as u128;
        let den = self.den as u128 * other.den as u128;
        let num = lhs.saturating_sub(rhs);
        let g = gcd(num, den);
        Ratio::new((num / g) as u64, (den / g) as u64)
    }
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a.max(1)
}

impl FromStr for Ratio {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let bad = || format!("`{s}` is not a non-negative decimal");
        let (int, frac) = s.split_once('.').unwrap_or((s, ""));
        if (int.is_empty() && frac.is_empty())
            || !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit())
            || frac.len() > 12
        {
            return Err(bad());
        }
        let den = 10u64.pow(frac.len() as u32);
        let int: u64 = if int.is_empty() {
            0
        } else {
            int.parse().map_err(|_| bad())?
        };
        let frac_v: u64 = if frac.is_empty() {
            0
        } else {
            frac.parse().map_err(|_| bad())?
        };
        let num = int
            .checked_mul(den)
            .and_then(|v| v.checked_add(frac_v))
            .ok_or_else(bad)?;
        let g = gcd(num as u128, den as u128) as u64;
        Ok(Ratio::new(num / g, den / g))
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_f64())
    }
}

impl Serialize for Ratio {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.as_f64())
    }
}

impl<'de> Deserialize<'de> for Ratio {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = f64::deserialize(d)?;
        // shortest round-trip formatting recovers the decimal that was written
        v.to_string().parse().map_err(serde::de::Error::custom)
    }
}

/// Prices and sizes of the short-only partition.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    /// On-demand over transient unit price.
    pub r: f64,
    /// On-demand servers in the static short-only partition.
    pub n: u32,
    /// Fraction of those servers that may be swapped for transient capacity.
    pub p: f64,
}

/// Counts derived from a [`CostModel`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capacity {
    /// Transient budget.
    pub k: u32,
    /// Largest short-only partition.
    pub t: u32,
    /// On-demand short-only servers that are kept.
    pub retained_on_demand: u32,
}

const EPS: f64 = 1e-9;

impl CostModel {
    pub fn from_prices(c_static: f64, c_trans: f64, n: u32, p: f64) -> Self {
        CostModel {
            r: c_static / c_trans,
            n,
            p,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.r >= 1.0 && self.r.is_finite()) {
            return Err(format!("cost ratio r must be >= 1, got {}", self.r));
        }
        if !(0.0..=1.0).contains(&self.p) {
            return Err(format!(
                "replaced fraction p must lie in [0, 1], got {}",
                self.p
            ));
        }
        Ok(())
    }

    /// `K = floor(r N p)`, `T = N ((r - 1) p + 1)` and `round((1 - p) N)`.
    ///
    /// When `p N` is not integral the rounding of the retained count could
    /// push `K + retained` past `T`; `K` is clipped so that never happens.
    pub fn capacity(&self) -> Capacity {
        let n = self.n as f64;
        let k = (self.r * n * self.p + EPS).floor() as u32;
        let t = (n * ((self.r - 1.0) * self.p + 1.0) + EPS).floor() as u32;
        let retained = ((1.0 - self.p) * n).round() as u32;
        Capacity {
            k: k.min(t.saturating_sub(retained)),
            t,
            retained_on_demand: retained,
        }
    }
}

pub fn compute_capacity(cost: &CostModel) -> Capacity {
    cost.capacity()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LongLoadState {
    pub n_long: u32,
    pub n_total: u32,
    pub threshold: Ratio,
    /// Provisioned and not retired, draining included.
    pub active_transient: u32,
    pub pending_transient: u32,
    pub draining_transient: u32,
}

impl LongLoadState {
    /// `l_r` as an exact fraction; `0 / 0` reads as zero.
    pub fn ratio(&self) -> (u32, u32) {
        (self.n_long, self.n_total)
    }

    pub fn l_r(&self) -> f64 {
        if self.n_total == 0 {
            0.0
        } else {
            self.n_long as f64 / self.n_total as f64
        }
    }
}

/// Reads `l_r` and the transient fleet from a snapshot.
pub fn recompute_long_load(snapshot: &ClusterSnapshot, threshold: Ratio) -> LongLoadState {
    let mut st = LongLoadState {
        n_long: snapshot.n_long,
        n_total: snapshot.n_total,
        threshold,
        active_transient: 0,
        pending_transient: 0,
        draining_transient: 0,
    };
    for s in snapshot
        .servers
        .iter()
        .filter(|s| s.provenance == Provenance::Transient)
    {
        match s.state {
            ServerState::Provisioning => st.pending_transient += 1,
            ServerState::Active => st.active_transient += 1,
            ServerState::Draining => {
                st.active_transient += 1;
                st.draining_transient += 1;
            }
            ServerState::Retired => {}
        }
    }
    st
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Action {
    RequestTransient,
    ReleaseTransient(ServerId),
    NoOp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub threshold: Ratio,
    /// Removal only starts once `l_r < threshold - hysteresis`.
    pub hysteresis: Ratio,
    /// Caps the actions emitted per invocation.
    pub max_actions: Option<u32>,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            threshold: Ratio::new(95, 100),
            hysteresis: Ratio::ZERO,
            max_actions: None,
        }
    }
}

/// A transient server that may be released.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ReleaseCandidate {
    pub id: ServerId,
    pub remaining_work: SimTime,
}

/// Orders release candidates least remaining work first, lowest id on ties.
pub fn order_candidates(c: &mut [ReleaseCandidate]) {
    c.sort_by_key(|c| (c.remaining_work, c.id));
}

/// One pass of the resize loop.
///
/// Above the threshold it keeps requesting servers, counting each pending
/// one in `n_total`, until `l_r` no longer exceeds the threshold or the
/// budget `k` is spent. Below the threshold (minus the hysteresis band) it
/// releases `candidates` in order until `l_r` climbs back or none remain.
/// Exact equality does nothing.
pub fn rebalance(
    state: &LongLoadState,
    k: u32,
    candidates: &[ReleaseCandidate],
    policy: &PolicyConfig,
) -> Vec<Action> {
    let cap = policy.max_actions.unwrap_or(u32::MAX) as usize;
    let thr = policy.threshold;
    let low = thr.saturating_sub(policy.hysteresis);
    let n_long = state.n_long as u64;
    let mut total = state.n_total as u64 + state.pending_transient as u64;
    let above = |total: u64| thr.cmp_fraction(n_long, total) == Ordering::Greater;
    let below = |total: u64| low.cmp_fraction(n_long, total) == Ordering::Less;

    let mut actions = Vec::new();
    if above(total) {
        let mut fleet = state.active_transient + state.pending_transient;
        while fleet < k && actions.len() < cap && above(total) {
            actions.push(Action::RequestTransient);
            fleet += 1;
            total += 1;
        }
    } else if below(total) {
        let releasable = state
            .active_transient
            .saturating_sub(state.draining_transient) as usize;
        for c in candidates.iter().take(releasable) {
            if actions.len() >= cap || !below(total) {
                break;
            }
            actions.push(Action::ReleaseTransient(c.id));
            total = total.saturating_sub(1);
        }
    }
    if actions.is_empty() {
        actions.push(Action::NoOp);
    }
    actions
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RevocationConfig {
    pub enabled: bool,
    pub mttf_s: f64,
    pub warning_s: f64,
}

impl Default for RevocationConfig {
    fn default() -> Self {
        RevocationConfig {
            enabled: false,
            mttf_s: 18.0 * 3600.0,
            warning_s: 30.0,
        }
    }
}

/// When a provider reclaims one transient server.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RevocationTimes {
    pub warning: SimTime,
    pub revoke: SimTime,
}

impl RevocationConfig {
    /// Draws an exponential lifetime for a server that just became active.
    /// Returns `None` when the feature is off.
    pub fn draw(&self, provisioned_at: SimTime, rng: &mut SimRng) -> Option<RevocationTimes> {
        if !self.enabled {
            return None;
        }
        let life = Exp::new(1.0 / self.mttf_s)
            .expect("positive mttf")
            .sample(rng);
        let warn = (life - self.warning_s).max(0.0);
        let at = |s: f64| provisioned_at + SimTime::from_secs_f64(s).unwrap_or(SimTime::MAX);
        Some(RevocationTimes {
            warning: at(warn),
            revoke: at(life),
        })
    }
}

/// Probability that an exponential failure clock with mean `mttf` fires
/// within `lifetime`.
pub fn revocation_probability(lifetime: SimTime, mttf_s: f64) -> f64 {
    1.0 - (-lifetime.as_secs_f64() / mttf_s).exp()
}
