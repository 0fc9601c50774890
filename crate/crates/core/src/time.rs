//! Integer-microsecond simulated clock.
//!
//! Every timestamp and span in the crate is a whole number of microseconds.
//! Conversions between action counts and durations go through [`ControlRate`]
//! and round half-up, so the same action count always maps to the same span.

use std::fmt;
use std::ops::{Add, AddAssign, Sub};

use serde::{Deserialize, Serialize};

pub const MICROS_PER_SEC: u64 = 1_000_000;

/// Microseconds since the simulation epoch.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct TimePoint(pub u64);

/// A non-negative span of microseconds.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Duration(pub u64);

impl TimePoint {
    pub const ZERO: TimePoint = TimePoint(0);

    pub const fn from_micros(us: u64) -> Self {
        TimePoint(us)
    }

    pub const fn as_micros(self) -> u64 {
        self.0
    }

    /// Span from `earlier` to `self`, or zero if `earlier` is later.
    pub fn saturating_since(self, earlier: TimePoint) -> Duration {
        Duration(self.0.saturating_sub(earlier.0))
    }

    pub fn checked_since(self, earlier: TimePoint) -> Option<Duration> {
        self.0.checked_sub(earlier.0).map(Duration)
    }
}

impl Duration {
    pub const ZERO: Duration = Duration(0);

    pub const fn from_micros(us: u64) -> Self {
        Duration(us)
    }

    pub const fn from_millis(ms: u64) -> Self {
        Duration(ms * 1_000)
    }

    pub const fn from_secs(s: u64) -> Self {
        Duration(s * MICROS_PER_SEC)
    }

    pub const fn as_micros(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / MICROS_PER_SEC as f64
    }

    pub fn saturating_sub(self, other: Duration) -> Duration {
        Duration(self.0.saturating_sub(other.0))
    }
}

impl Add<Duration> for TimePoint {
    type Output = TimePoint;
    fn add(self, rhs: Duration) -> TimePoint {
        TimePoint(self.0 + rhs.0)
    }
}

impl AddAssign<Duration> for TimePoint {
    fn add_assign(&mut self, rhs: Duration) {
        self.0 += rhs.0;
    }
}

impl Add for Duration {
    type Output = Duration;
    fn add(self, rhs: Duration) -> Duration {
        Duration(self.0 + rhs.0)
    }
}

impl AddAssign for Duration {
    fn add_assign(&mut self, rhs: Duration) {
        self.0 += rhs.0;
    }
}

impl Sub for Duration {
    type Output = Duration;
    fn sub(self, rhs: Duration) -> Duration {
        Duration(self.0 - rhs.0)
    }
}

impl std::iter::Sum for Duration {
    fn sum<I: Iterator<Item = Duration>>(iter: I) -> Duration {
        Duration(iter.map(|d| d.0).sum())
    }
}

impl fmt::Display for TimePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}us", self.0)
    }
}

impl fmt::Display for Duration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}us", self.0)
    }
}

/// Robot control frequency in whole hertz.
///
/// Integer hertz keeps action-count to duration conversion in exact integer
/// arithmetic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct ControlRate(u32);

impl ControlRate {
    pub fn new(hz: u32) -> Option<Self> {
        (hz > 0).then_some(ControlRate(hz))
    }

    pub fn hz(self) -> u32 {
        self.0
    }

    /// Time to execute `actions` actions, `actions / hz` seconds rounded
    /// half-up to the microsecond.
    pub fn actions_to_duration(self, actions: u64) -> Duration {
        let hz = u128::from(self.0);
        let num = 2 * u128::from(actions) * u128::from(MICROS_PER_SEC) + hz;
        Duration((num / (2 * hz)) as u64)
    }

    /// Smallest action count whose execution covers `span`, i.e. `ceil(span * hz)`.
    pub fn actions_covering(self, span: Duration) -> u64 {
        let num = u128::from(span.0) * u128::from(self.0);
        num.div_ceil(u128::from(MICROS_PER_SEC)) as u64
    }
}

impl TryFrom<u32> for ControlRate {
    type Error = String;
    fn try_from(hz: u32) -> Result<Self, Self::Error> {
        ControlRate::new(hz).ok_or_else(|| "control_hz must be positive".to_string())
    }
}

impl From<ControlRate> for u32 {
    fn from(rate: ControlRate) -> u32 {
        rate.0
    }
}

impl fmt::Display for ControlRate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}Hz", self.0)
    }
}

/// Execution time of a horizon of `horizon` actions at `rate`.
pub fn exec_duration(horizon: u32, rate: ControlRate) -> Duration {
    rate.actions_to_duration(u64::from(horizon))
}

/// Divide `num` by `den` rounding half-up. `den` must be non-zero.
pub(crate) fn div_round_half_up(num: u128, den: u128) -> u128 {
    (2 * num + den) / (2 * den)
}

/// Half-open interval `[start, end)` on the simulated clock.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Interval {
    pub start: TimePoint,
    pub end: TimePoint,
}

impl Interval {
    pub fn new(start: TimePoint, end: TimePoint) -> Option<Self> {
        (start <= end).then_some(Interval { start, end })
    }

    pub fn len(&self) -> Duration {
        self.end.saturating_since(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }
}
