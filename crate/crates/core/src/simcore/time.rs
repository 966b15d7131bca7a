use std::fmt;
use std::ops::{Add, AddAssign, Sub};

use serde::{Deserialize, Serialize};

const MICROS_PER_SEC: u64 = 1_000_000;

/// Virtual time in whole microseconds.
///
/// Integer representation keeps timestamp equality exact: adding the
/// provisioning delay a thousand times lands on the same instant as
/// multiplying it once.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub const fn from_micros(us: u64) -> Self {
        SimTime(us)
    }

    pub const fn from_secs(s: u64) -> Self {
        SimTime(s * MICROS_PER_SEC)
    }

    /// Rounds to the nearest microsecond. Negative and NaN inputs yield `None`.
    pub fn from_secs_f64(s: f64) -> Option<Self> {
        if !s.is_finite() || s < 0.0 {
            return None;
        }
        let us = (s * MICROS_PER_SEC as f64).round();
        if us > u64::MAX as f64 {
            return None;
        }
        Some(SimTime(us as u64))
    }

    pub const fn as_micros(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / MICROS_PER_SEC as f64
    }

    pub fn as_hours_f64(self) -> f64 {
        self.as_secs_f64() / 3600.0
    }

    pub fn saturating_sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(rhs.0))
    }

    pub fn checked_add(self, rhs: SimTime) -> Option<SimTime> {
        self.0.checked_add(rhs.0).map(SimTime)
    }
}

impl Add for SimTime {
    type Output = SimTime;

    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl AddAssign for SimTime {
    fn add_assign(&mut self, rhs: SimTime) {
        self.0 += rhs.0;
    }
}

impl Sub for SimTime {
    type Output = SimTime;

    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

impl std::iter::Sum for SimTime {
    fn sum<I: Iterator<Item = SimTime>>(iter: I) -> SimTime {
        iter.fold(SimTime::ZERO, |a, b| a + b)
    }
}

/// Prints seconds with all six fractional digits, trailing zeros trimmed
/// down to one (`12.0`, `0.5`, `3.000001`). Parsing this back through
/// [`SimTime::from_secs_f64`] is lossless.
impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let whole = self.0 / MICROS_PER_SEC;
        let frac = self.0 % MICROS_PER_SEC;
        if frac == 0 {
            return write!(f, "{whole}.0");
        }
        let digits = format!("{frac:06}");
        write!(f, "{whole}.{}", digits.trim_end_matches('0'))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn repeated_delay_is_exact() {
        let delay = SimTime::from_secs(120);
        let mut t = SimTime::ZERO;
        for _ in 0..1000 {
            t += delay;
        }
        assert_eq!(t, SimTime::from_secs(120_000));
    }

    #[test]
    fn display_round_trips() {
        for us in [0u64, 1, 500_000, 12_000_000, 3_000_001, 987_654_321] {
            let t = SimTime::from_micros(us);
            let back = SimTime::from_secs_f64(t.to_string().parse().unwrap()).unwrap();
            assert_eq!(back, t);
        }
        assert_eq!(SimTime::from_secs(12).to_string(), "12.0");
        assert_eq!(SimTime::from_micros(500_000).to_string(), "0.5");
    }

    #[test]
    fn rejects_negative_and_nan() {
        assert!(SimTime::from_secs_f64(-1.0).is_none());
        assert!(SimTime::from_secs_f64(f64::NAN).is_none());
        assert_eq!(SimTime::from_secs_f64(0.0000004), Some(SimTime::ZERO));
    }
}
