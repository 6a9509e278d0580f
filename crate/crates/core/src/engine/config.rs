use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::controlplane::Direction;
use crate::dataplane::{
    DEFAULT_FRAME_OVERHEAD, DEFAULT_INSTALL_LATENCY, DEFAULT_PROBE_SIZE, DEFAULT_TRANSITION_TIME,
};
use crate::time::SimTime;
use crate::topology::{NodeId, Topology, DEFAULT_BUFFER_LIMIT};
use crate::traffic::FlowSpec;

/// A delay distribution, in seconds at the edges and sampled in whole
/// nanoseconds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "dist", deny_unknown_fields)]
pub enum RandomVar {
    Fixed { value_s: f64 },
    /// Inclusive on both ends.
    Uniform { lo_s: f64, hi_s: f64 },
}

impl RandomVar {
    pub fn fixed(t: SimTime) -> Self {
        RandomVar::Fixed {
            value_s: t.as_secs_f64(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> SimTime {
        match *self {
            RandomVar::Fixed { value_s } => SimTime::from_secs_f64(value_s),
            RandomVar::Uniform { lo_s, hi_s } => {
                let lo = SimTime::from_secs_f64(lo_s).as_nanos();
                let hi = SimTime::from_secs_f64(hi_s).as_nanos();
                if hi <= lo {
                    SimTime::from_nanos(lo)
                } else {
                    SimTime::from_nanos(rng.random_range(lo..=hi))
                }
            }
        }
    }

    pub fn mean(&self) -> SimTime {
        match *self {
            RandomVar::Fixed { value_s } => SimTime::from_secs_f64(value_s),
            RandomVar::Uniform { lo_s, hi_s } => SimTime::from_secs_f64((lo_s + hi_s) / 2.0),
        }
    }

    pub fn is_valid(&self) -> bool {
        match *self {
            RandomVar::Fixed { value_s } => value_s.is_finite() && value_s >= 0.0,
            RandomVar::Uniform { lo_s, hi_s } => {
                lo_s.is_finite() && hi_s.is_finite() && lo_s >= 0.0 && hi_s >= lo_s
            }
        }
    }
}

/// Delays of every control-plane leg.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyParams {
    /// LiT controller processing time per notification.
    pub d_lit: RandomVar,
    /// SDN controller processing time per trigger.
    pub d_sdn: RandomVar,
    /// Out-of-band LiT <-> SDN transit, each way.
    pub d_link: RandomVar,
    /// Flow install latency; back-to-back FlowMods are pipelined one
    /// install latency apart.
    pub install_latency: SimTime,
    /// ONU / line card sleep and wake time.
    pub transition_time: SimTime,
}

impl Default for LatencyParams {
    /// Controller processing ~ U[6, 38] ms so that the end-to-end
    /// reconfiguration has a median near 45 ms with about half of the mass
    /// in [40, 60) ms.
    fn default() -> Self {
        LatencyParams {
            d_lit: RandomVar::Uniform {
                lo_s: 0.006,
                hi_s: 0.038,
            },
            d_sdn: RandomVar::Uniform {
                lo_s: 0.006,
                hi_s: 0.038,
            },
            d_link: RandomVar::Fixed { value_s: 0.001 },
            install_latency: DEFAULT_INSTALL_LATENCY,
            transition_time: DEFAULT_TRANSITION_TIME,
        }
    }
}

/// How much per-packet detail goes into the event log.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogDetail {
    /// Power, control, flow-table changes, warnings and per-flow totals.
    Summary,
    /// Summary plus drops and tap captures.
    #[default]
    Standard,
    /// Standard plus every create, enqueue and delivery.
    Full,
}

/// A sleep or wake order for one ONU / line-card pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PowerCommand {
    pub at: SimTime,
    pub direction: Direction,
    pub onu: NodeId,
    pub lc: NodeId,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub t_end: SimTime,
    pub topology: Topology,
    pub flows: Vec<FlowSpec>,
    pub commands: Vec<PowerCommand>,
    pub latency: LatencyParams,
    pub frame_overhead: u32,
    pub probe_size: u32,
    /// Per-switch table-miss buffer.
    pub miss_buffer_bytes: u64,
    pub miss_timeout: SimTime,
    /// Where captures are taken; defaults to the aggregation node.
    pub tap: Option<NodeId>,
    /// Probe replies are captured only this long after a control capture.
    /// `None` captures all of them.
    pub capture_window: Option<SimTime>,
    pub log_detail: LogDetail,
}

impl RunConfig {
    pub fn new(topology: Topology, t_end: SimTime, seed: u64) -> Self {
        RunConfig {
            seed,
            t_end,
            topology,
            flows: Vec::new(),
            commands: Vec::new(),
            latency: LatencyParams::default(),
            frame_overhead: DEFAULT_FRAME_OVERHEAD,
            probe_size: DEFAULT_PROBE_SIZE,
            miss_buffer_bytes: DEFAULT_BUFFER_LIMIT,
            miss_timeout: SimTime::from_secs(1),
            tap: None,
            capture_window: Some(SimTime::from_secs(1)),
            log_detail: LogDetail::Standard,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_stays_in_bounds() {
        let v = RandomVar::Uniform {
            lo_s: 0.008,
            hi_s: 0.020,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let s = v.sample(&mut rng);
            assert!(s >= SimTime::from_millis(8) && s <= SimTime::from_millis(20));
        }
    }

    #[test]
    fn fixed_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(
            RandomVar::Fixed { value_s: 0.001 }.sample(&mut rng),
            SimTime::from_millis(1)
        );
    }

    #[test]
    fn serde_shape() {
        let v: RandomVar = serde_json::from_str(r#"{"dist":"uniform","lo_s":0.006,"hi_s":0.038}"#).unwrap();
        assert_eq!(v.mean(), SimTime::from_millis(22));
    }
}
