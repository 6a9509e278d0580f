//! Workload definitions: 1 ms echo probes and constant-bit-rate flows.
//!
//! Generators are pure schedules; the event engine turns them into timer
//! events and packets.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataplane::{FlowId, PacketKind};
use crate::time::SimTime;
use crate::topology::{NodeId, Topology, VlanId};

/// Echo-request stream; the destination answers every request at once.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeFlowSpec {
    pub src: NodeId,
    pub dst: NodeId,
    pub interval: SimTime,
    pub vlan_id: VlanId,
}

/// Perfectly periodic UDP stream. `offered_load_bps` counts payload bits.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CbrFlowSpec {
    pub src: NodeId,
    pub dst: NodeId,
    pub payload_size: u32,
    pub offered_load_bps: u64,
    pub vlan_id: VlanId,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum FlowSpec {
    Probe(ProbeFlowSpec),
    Cbr(CbrFlowSpec),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TrafficError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("flow source and destination are both {0}")]
    SameEndpoints(NodeId),
    #[error("probe interval must be positive")]
    ZeroInterval,
    #[error("offered load must be positive")]
    ZeroLoad,
    #[error("payload size must be positive")]
    ZeroPayload,
}

impl FlowSpec {
    pub fn src(&self) -> NodeId {
        match self {
            FlowSpec::Probe(p) => p.src,
            FlowSpec::Cbr(c) => c.src,
        }
    }

    pub fn dst(&self) -> NodeId {
        match self {
            FlowSpec::Probe(p) => p.dst,
            FlowSpec::Cbr(c) => c.dst,
        }
    }

    pub fn vlan_id(&self) -> VlanId {
        match self {
            FlowSpec::Probe(p) => p.vlan_id,
            FlowSpec::Cbr(c) => c.vlan_id,
        }
    }

    pub fn packet_kind(&self) -> PacketKind {
        match self {
            FlowSpec::Probe(_) => PacketKind::ProbeRequest,
            FlowSpec::Cbr(_) => PacketKind::Cbr,
        }
    }

    pub fn validate(&self, topology: &Topology) -> Result<(), TrafficError> {
        let (src, dst) = (self.src(), self.dst());
        for n in [src, dst] {
            if !topology.contains(n) {
                return Err(TrafficError::UnknownNode(n));
            }
        }
        if src == dst {
            return Err(TrafficError::SameEndpoints(src));
        }
        match self {
            FlowSpec::Probe(p) if p.interval == SimTime::ZERO => Err(TrafficError::ZeroInterval),
            FlowSpec::Cbr(c) if c.payload_size == 0 => Err(TrafficError::ZeroPayload),
            FlowSpec::Cbr(c) if c.offered_load_bps == 0 => Err(TrafficError::ZeroLoad),
            _ => Ok(()),
        }
    }

    /// Creation time of the `k`-th packet, counted from `start`.
    pub fn emit_time(&self, start: SimTime, k: u64) -> SimTime {
        match self {
            FlowSpec::Probe(p) => start + p.interval * k,
            FlowSpec::Cbr(c) => {
                let bits = c.payload_size as u128 * 8;
                let ns = k as u128 * bits * 1_000_000_000 / c.offered_load_bps as u128;
                start + SimTime::from_nanos(ns as u64)
            }
        }
    }

    /// On-wire size of generated packets.
    pub fn wire_size(&self, frame_overhead: u32, probe_size: u32) -> u32 {
        match self {
            FlowSpec::Probe(_) => probe_size,
            FlowSpec::Cbr(c) => c.payload_size + frame_overhead,
        }
    }
}

/// Nominal CBR period, payload_size * 8 / offered_load (exact when it
/// divides; otherwise individual gaps differ by at most 1 ns).
pub fn cbr_period(spec: &CbrFlowSpec) -> SimTime {
    SimTime::from_nanos(
        (spec.payload_size as u128 * 8 * 1_000_000_000 / spec.offered_load_bps as u128) as u64,
    )
}

/// Offered load on the wire once framing overhead is added.
pub fn wire_load_bps(spec: &CbrFlowSpec, frame_overhead: u32) -> f64 {
    spec.offered_load_bps as f64 * (spec.payload_size + frame_overhead) as f64
        / spec.payload_size as f64
}

/// Validates a probe flow and returns its handle (its index in the run).
pub fn start_probe_flow(
    topology: &Topology,
    flows: &mut Vec<FlowSpec>,
    spec: ProbeFlowSpec,
) -> Result<FlowId, TrafficError> {
    push(topology, flows, FlowSpec::Probe(spec))
}

/// Validates a CBR flow and returns its handle (its index in the run).
pub fn start_cbr_flow(
    topology: &Topology,
    flows: &mut Vec<FlowSpec>,
    spec: CbrFlowSpec,
) -> Result<FlowId, TrafficError> {
    push(topology, flows, FlowSpec::Cbr(spec))
}

fn push(topology: &Topology, flows: &mut Vec<FlowSpec>, spec: FlowSpec) -> Result<FlowId, TrafficError> {
    spec.validate(topology)?;
    flows.push(spec);
    Ok(FlowId(flows.len() as u32 - 1))
}

/// Number of packets a flow creates in `[0, duration)`.
pub fn packets_in(spec: &FlowSpec, duration: SimTime) -> u64 {
    let mut lo = 0u64;
    let mut hi = 1u64;
    while spec.emit_time(SimTime::ZERO, hi) < duration {
        hi *= 2;
    }
    // First k with emit_time(k) >= duration.
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if spec.emit_time(SimTime::ZERO, mid) < duration {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    lo
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::build_reference_topology;

    fn cbr(load: u64) -> CbrFlowSpec {
        CbrFlowSpec {
            src: NodeId(0),
            dst: NodeId(11),
            payload_size: 1400,
            offered_load_bps: load,
            vlan_id: VlanId(1),
        }
    }

    #[test]
    fn cbr_periods() {
        assert_eq!(cbr_period(&cbr(20_000_000)), SimTime::from_micros(560));
        assert_eq!(cbr_period(&cbr(100_000_000)), SimTime::from_micros(112));
    }

    #[test]
    fn probes_every_millisecond() {
        let p = FlowSpec::Probe(ProbeFlowSpec {
            src: NodeId(1),
            dst: NodeId(12),
            interval: SimTime::from_millis(1),
            vlan_id: VlanId(2),
        });
        assert_eq!(packets_in(&p, SimTime::from_millis(10)), 10);
    }

    #[test]
    fn rejects_degenerate_specs() {
        let t = build_reference_topology();
        let mut flows = Vec::new();
        let mut zero = cbr(0);
        assert_eq!(
            start_cbr_flow(&t, &mut flows, zero.clone()),
            Err(TrafficError::ZeroLoad)
        );
        zero.offered_load_bps = 1;
        zero.dst = zero.src;
        assert_eq!(
            start_cbr_flow(&t, &mut flows, zero),
            Err(TrafficError::SameEndpoints(NodeId(0)))
        );
        let loopback = ProbeFlowSpec {
            src: NodeId(1),
            dst: NodeId(1),
            interval: SimTime::from_millis(1),
            vlan_id: VlanId(2),
        };
        assert!(start_probe_flow(&t, &mut flows, loopback).is_err());
        assert_eq!(start_cbr_flow(&t, &mut flows, cbr(1)), Ok(FlowId(0)));
    }

    #[test]
    fn wire_load_includes_overhead() {
        let w = wire_load_bps(&cbr(100_000_000), 54);
        assert!((w - 103_857_142.857).abs() < 1e-2);
    }
}
