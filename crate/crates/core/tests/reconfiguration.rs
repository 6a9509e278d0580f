//! End-to-end behaviour of sleep/wake episodes.

mod common;

use std::collections::BTreeMap;

use common::*;
use fronthaul_sim::controlplane::Direction;
use fronthaul_sim::dataplane::{FlowEntry, PacketKind};
use fronthaul_sim::engine::{LogRecord, Simulation};
use fronthaul_sim::metrics::{reconfiguration_times, reroute_completion};
use fronthaul_sim::topology::NodeKind;
use fronthaul_sim::{run, SimTime};

fn ms(v: u64) -> SimTime {
    SimTime::from_millis(v)
}

fn switch_tables(sim: &Simulation) -> BTreeMap<String, Vec<FlowEntry>> {
    let topo = sim.topology();
    topo.nodes()
        .iter()
        .filter(|n| n.kind.is_switch())
        .map(|n| {
            let entries = sim.flow_table(n.id).map(|t| t.entries().collect()).unwrap_or_default();
            (n.label.clone(), entries)
        })
        .collect()
}

#[test]
fn sleep_then_wake_restores_every_flow_table() {
    let cfg = ping_config(ms(3000), 5, &[(ms(1000), ms(2000))]);
    let mut sim = Simulation::new(cfg).unwrap();
    sim.run_until(ms(900));
    let before = switch_tables(&sim);
    sim.run_until(ms(1900));
    let asleep = switch_tables(&sim);
    assert_ne!(before, asleep, "sleeping must change some table");
    sim.run_until(ms(2900));
    assert_eq!(before, switch_tables(&sim));
    let out = sim.finish();
    assert!(out.conservation_ok());
}

#[test]
fn devices_are_off_while_asleep() {
    let cfg = ping_config(ms(3000), 5, &[(ms(1000), ms(2000))]);
    let mut sim = Simulation::new(cfg).unwrap();
    let lc2 = id(sim.topology(), "LC2");
    let onu2 = id(sim.topology(), "ONU2");
    sim.run_until(ms(1500));
    assert_eq!(sim.power_state(lc2), fronthaul_sim::dataplane::PowerState::Off);
    assert_eq!(sim.power_state(onu2), fronthaul_sim::dataplane::PowerState::Off);
    sim.run_until(ms(2500));
    assert!(sim.power_state(lc2) == fronthaul_sim::dataplane::PowerState::On);
}

#[test]
fn every_probe_after_reroute_completion_is_delivered() {
    let cycles = [(ms(500), ms(1500)), (ms(2500), ms(3500))];
    let out = run(ping_config(ms(4500), 11, &cycles)).unwrap();
    let done = reroute_completion(&out.log);
    assert_eq!(done.len(), 4, "{done:?}");
    let commands: Vec<SimTime> = out
        .log
        .iter()
        .filter_map(|r| match r {
            LogRecord::Command { t, .. } => Some(*t),
            _ => None,
        })
        .collect();

    let mut created = BTreeMap::new();
    let mut delivered = BTreeMap::new();
    for r in out.log.iter() {
        match r {
            LogRecord::Create { t, seq, kind: PacketKind::ProbeRequest, .. } => {
                created.insert(*seq, *t);
            }
            LogRecord::Deliver { seq, kind: PacketKind::ProbeReply, .. } => {
                delivered.insert(*seq, ());
            }
            _ => {}
        }
    }
    // Probes sent between an episode's completion and the next command
    // must all come back.
    for (i, (&ep, &t_done)) in done.iter().enumerate() {
        let next = commands.get(i + 1).copied().unwrap_or(SimTime::MAX);
        let window: Vec<_> = created
            .iter()
            .filter(|(_, &t)| t >= t_done && t < next.saturating_sub(ms(50)))
            .collect();
        assert!(!window.is_empty(), "episode {ep}");
        for (seq, _) in window {
            assert!(delivered.contains_key(seq), "episode {ep}: probe {seq} lost");
        }
    }
}

#[test]
fn tap_measurement_tracks_ground_truth() {
    let cycles: Vec<_> = (0..6u64).map(|k| (ms(400 + 1000 * k), ms(900 + 1000 * k))).collect();
    let cfg = ping_config(ms(6500), 21, &cycles);
    let topo = cfg.topology.clone();
    let out = run(cfg).unwrap();
    let tap = id(&topo, "L2SW");
    let times = reconfiguration_times(&out.log, tap).unwrap();
    let done = reroute_completion(&out.log);
    assert_eq!(times.samples.len(), 12);
    assert!(times.incomplete.is_empty());
    // Round trip of a 64 B probe over the longest route: 2 * 17.783 us.
    let bound = ms(1) + SimTime::from_nanos(2 * 17_783);
    for s in &times.samples {
        let truth = done[&s.episode_index] - s.trigger_seen_at;
        let excess = s.duration.saturating_sub(truth);
        assert!(excess <= bound, "{s:?} truth {truth}");
    }
    let sleeps = times.durations(Direction::Sleep).len();
    assert_eq!(sleeps, 6);
}

#[test]
fn sleeping_a_pair_reroutes_through_the_other() {
    let out = run(ping_config(ms(1500), 2, &[(ms(500), ms(1400))])).unwrap();
    let topo = fronthaul_sim::build_reference_topology();
    let hops: Vec<String> = out
        .log
        .iter()
        .find_map(|r| match r {
            LogRecord::Reroute { hops, .. } => Some(hops.iter().map(|h| topo.label(*h).to_string()).collect()),
            _ => None,
        })
        .unwrap();
    assert_eq!(hops.join("-"), "ONU1-LC1-L2SW-s1-s3-NF2");
    assert!(topo.nodes_of_kind(NodeKind::AggregationSwitch).count() == 3);
}
