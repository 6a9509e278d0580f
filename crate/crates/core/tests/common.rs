#![allow(dead_code)]

use fronthaul_sim::controlplane::Direction;
use fronthaul_sim::engine::{LogDetail, PowerCommand, RunConfig};
use fronthaul_sim::topology::{build_reference_topology, NodeId, Topology, VlanId};
use fronthaul_sim::traffic::{CbrFlowSpec, FlowSpec, ProbeFlowSpec};
use fronthaul_sim::SimTime;

pub fn id(t: &Topology, label: &str) -> NodeId {
    t.find(label).unwrap_or_else(|| panic!("no node {label}"))
}

pub fn probe(t: &Topology, src: &str, dst: &str, interval: SimTime, vlan: u16) -> FlowSpec {
    FlowSpec::Probe(ProbeFlowSpec {
        src: id(t, src),
        dst: id(t, dst),
        interval,
        vlan_id: VlanId(vlan),
    })
}

pub fn cbr(t: &Topology, src: &str, dst: &str, load_bps: u64, vlan: u16) -> FlowSpec {
    FlowSpec::Cbr(CbrFlowSpec {
        src: id(t, src),
        dst: id(t, dst),
        payload_size: 1400,
        offered_load_bps: load_bps,
        vlan_id: VlanId(vlan),
    })
}

pub fn pair_command(t: &Topology, at: SimTime, direction: Direction, pair: u8) -> PowerCommand {
    PowerCommand {
        at,
        direction,
        onu: id(t, &format!("ONU{pair}")),
        lc: id(t, &format!("LC{pair}")),
    }
}

/// 1 ms pings UE2 -> NF2 with ONU2/LC2 asleep over each `(sleep, wake)`.
pub fn ping_config(t_end: SimTime, seed: u64, cycles: &[(SimTime, SimTime)]) -> RunConfig {
    let topo = build_reference_topology();
    let mut cfg = RunConfig::new(topo.clone(), t_end, seed);
    cfg.flows = vec![probe(&topo, "UE2", "NF2", SimTime::from_millis(1), 2)];
    for &(s, w) in cycles {
        cfg.commands.push(pair_command(&topo, s, Direction::Sleep, 2));
        cfg.commands.push(pair_command(&topo, w, Direction::Wake, 2));
    }
    cfg.log_detail = LogDetail::Full;
    cfg.capture_window = None;
    cfg
}
