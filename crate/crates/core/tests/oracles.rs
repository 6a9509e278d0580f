//! Hand-derived timing oracles for the engine.

mod common;

use common::*;
use fronthaul_sim::dataplane::PacketKind;
use fronthaul_sim::engine::{FlowKind, LogDetail, LogRecord, RunConfig};
use fronthaul_sim::time::serialization_time;
use fronthaul_sim::{build_reference_topology, run, SimTime};

#[test]
fn full_frame_on_tunnel_takes_116_32_us() {
    // (1400 + 54) B * 8 / 100 Mb/s
    assert_eq!(serialization_time(1454, 100_000_000), SimTime::from_nanos(116_320));
}

#[test]
fn single_probe_delay_is_sum_of_link_terms() {
    let topo = build_reference_topology();
    let mut cfg = RunConfig::new(topo.clone(), SimTime::from_millis(10), 3);
    // One request: the next would be due after t_end.
    cfg.flows = vec![probe(&topo, "UE2", "NF2", SimTime::from_secs(1), 2)];
    cfg.log_detail = LogDetail::Full;
    let out = run(cfg).unwrap();

    // UE2-ASW, ASW-ONU2, ONU2-LC2, L2SW-s2, s3-NF2 at 1 Gb/s: 64 B = 512 ns each.
    // LC2-L2SW tunnel at 100 Mb/s: 5120 ns. s2-s3 at 5 Gb/s: 102.4 -> 103 ns.
    // Propagation: 1 + 1 + 5 + 0 + 1 + 1 + 1 us.
    let expected = SimTime::from_nanos(5 * 512 + 5120 + 103 + 10_000);
    let nf2 = id(&topo, "NF2");
    let ue2 = id(&topo, "UE2");
    let delivered: Vec<_> = out
        .log
        .iter()
        .filter_map(|r| match r {
            LogRecord::Deliver {
                t, kind, node, created_at, ..
            } => Some((*kind, *node, *t - *created_at)),
            _ => None,
        })
        .collect();
    // The reply retraces the same links in reverse.
    assert_eq!(
        delivered,
        vec![
            (PacketKind::ProbeRequest, nf2, expected),
            (PacketKind::ProbeReply, ue2, expected)
        ]
    );
}

#[test]
fn empty_run_logs_only_bookends() {
    let cfg = RunConfig::new(build_reference_topology(), SimTime::from_secs(5), 9);
    let out = run(cfg).unwrap();
    let recs: Vec<_> = out.log.iter().collect();
    assert_eq!(recs.len(), 3, "{recs:?}");
    assert!(matches!(recs[0], LogRecord::RunStart { seed: 9, .. }));
    assert!(matches!(
        recs[1],
        LogRecord::FlowSummary {
            kind: FlowKind::Control,
            created: 0,
            ..
        }
    ));
    assert!(matches!(recs[2], LogRecord::RunEnd { created: 0, .. }));
}

#[test]
fn cbr_emission_count_matches_period() {
    let topo = build_reference_topology();
    let mut cfg = RunConfig::new(topo.clone(), SimTime::from_millis(100), 1);
    // 1400 B at 20 Mb/s: one datagram every 560 us; [0, 100 ms) holds 179.
    cfg.flows = vec![cbr(&topo, "UE1", "NF1", 20_000_000, 1)];
    let out = run(cfg).unwrap();
    assert_eq!(out.flows[0].created, 179);
    assert_eq!(out.flows[0].delivered + out.flows[0].in_flight, 179);
}
