//! Simulation time.
//!
//! All clocks inside the simulator are integer nanoseconds so that event
//! ordering never depends on floating-point rounding. Seconds only appear at
//! the edges (scenario files, CSV reports).

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Sub};

use serde::{Deserialize, Serialize};

/// A point in simulated time, or a span of it, in nanoseconds.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub const fn from_nanos(ns: u64) -> Self {
        SimTime(ns)
    }

    pub const fn from_micros(us: u64) -> Self {
        SimTime(us * 1_000)
    }

    pub const fn from_millis(ms: u64) -> Self {
        SimTime(ms * 1_000_000)
    }

    pub const fn from_secs(s: u64) -> Self {
        SimTime(s * 1_000_000_000)
    }

    /// Rounds to the nearest nanosecond. Negative and non-finite inputs
    /// saturate to zero and `MAX` respectively.
    pub fn from_secs_f64(s: f64) -> Self {
        if s.is_nan() || s <= 0.0 {
            return SimTime::ZERO;
        }
        let ns = (s * 1e9).round();
        if ns >= u64::MAX as f64 {
            SimTime::MAX
        } else {
            SimTime(ns as u64)
        }
    }

    pub const fn as_nanos(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e9
    }

    pub fn as_millis_f64(self) -> f64 {
        self.0 as f64 / 1e6
    }

    pub fn as_micros_f64(self) -> f64 {
        self.0 as f64 / 1e3
    }

    pub fn saturating_sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(rhs.0))
    }

    pub fn checked_sub(self, rhs: SimTime) -> Option<SimTime> {
        self.0.checked_sub(rhs.0).map(SimTime)
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_add(rhs.0))
    }
}

impl AddAssign for SimTime {
    fn add_assign(&mut self, rhs: SimTime) {
        *self = *self + rhs;
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(
            self.0
                .checked_sub(rhs.0)
                .expect("simulated time subtraction underflow"),
        )
    }
}

impl Mul<u64> for SimTime {
    type Output = SimTime;
    fn mul(self, rhs: u64) -> SimTime {
        SimTime(self.0.saturating_mul(rhs))
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:09}s", self.0 / 1_000_000_000, self.0 % 1_000_000_000)
    }
}

/// Time to clock `bytes` onto a link of `capacity_bps`, rounded up to the
/// next nanosecond.
pub fn serialization_time(bytes: u64, capacity_bps: u64) -> SimTime {
    assert!(capacity_bps > 0, "link capacity must be positive");
    let bits = bytes as u128 * 8 * 1_000_000_000;
    let cap = capacity_bps as u128;
    SimTime(bits.div_ceil(cap) as u64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_serialization_on_tunnel() {
        // 1454 * 8 / 1e8 s = 116.32 us
        assert_eq!(
            serialization_time(1454, 100_000_000),
            SimTime::from_nanos(116_320)
        );
    }

    #[test]
    fn serialization_rounds_up() {
        // 1 byte at 3 b/s = 2.666.. s
        assert_eq!(serialization_time(1, 3), SimTime::from_nanos(2_666_666_667));
    }

    #[test]
    fn secs_roundtrip() {
        assert_eq!(SimTime::from_secs_f64(1.00005), SimTime::from_nanos(1_000_050_000));
        assert_eq!(SimTime::from_secs_f64(-3.0), SimTime::ZERO);
        assert_eq!(SimTime::from_millis(45).as_millis_f64(), 45.0);
    }

    #[test]
    fn display_is_seconds() {
        assert_eq!(SimTime::from_nanos(1_000_050_000).to_string(), "1.000050000s");
    }
}
