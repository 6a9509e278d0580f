//! Property tests of individual building blocks.

use std::collections::{BTreeSet, VecDeque};

use fronthaul_sim::controlplane::{compute_reroute, ControlError};
use fronthaul_sim::dataplane::{EgressQueue, EnqueueResult};
use fronthaul_sim::energy::{energy_savings, DutyCycle, PowerModel};
use fronthaul_sim::metrics::{median, pmf};
use fronthaul_sim::topology::{build_reference_topology, Link, LinkId, NodeId, NodeKind, Topology, VlanId};
use fronthaul_sim::time::serialization_time;
use fronthaul_sim::SimTime;
use proptest::prelude::*;

/// Independent reachability check: can some live ONU reach the server
/// through live line cards and switches?
fn reachable(t: &Topology, vlan: VlanId, off: &BTreeSet<NodeId>) -> bool {
    let server = *t.vlan(vlan).unwrap().hops.last().unwrap();
    let usable = |n: NodeId| {
        !off.contains(&n)
            && matches!(
                t.kind(n),
                NodeKind::OltLineCard | NodeKind::AggregationL2Switch | NodeKind::AggregationSwitch
            )
    };
    let mut seen = BTreeSet::from([server]);
    let mut queue = VecDeque::from([server]);
    while let Some(n) = queue.pop_front() {
        for (m, _) in t.neighbors(n) {
            if t.kind(m) == NodeKind::Onu && !off.contains(&m) && n != server {
                return true;
            }
            if usable(m) && seen.insert(m) {
                queue.push_back(m);
            }
        }
    }
    false
}

proptest! {
    #[test]
    fn reroutes_are_valid_paths(mask in 0u32..128, vlan in 1u16..=2) {
        let t = build_reference_topology();
        let candidates = ["ONU1", "ONU2", "LC1", "LC2", "s1", "s2", "s3"];
        let off: BTreeSet<NodeId> = candidates
            .iter()
            .enumerate()
            .filter(|(i, _)| mask & (1 << i) != 0)
            .map(|(_, l)| t.find(l).unwrap())
            .collect();
        let home = t.vlan(VlanId(vlan)).unwrap().clone();
        match compute_reroute(&t, VlanId(vlan), &off) {
            Ok(p) => {
                prop_assert!(reachable(&t, VlanId(vlan), &off));
                prop_assert_eq!(t.kind(p.hops[0]), NodeKind::Onu);
                prop_assert_eq!(p.hops.last(), home.hops.last());
                prop_assert!(p.hops.iter().all(|h| !off.contains(h)));
                let distinct: BTreeSet<_> = p.hops.iter().collect();
                prop_assert_eq!(distinct.len(), p.hops.len());
                for w in p.hops.windows(2) {
                    prop_assert!(t.link_between(w[0], w[1]).is_some());
                }
                if home.hops.iter().all(|h| !off.contains(h)) {
                    prop_assert_eq!(p.hops, home.hops);
                }
            }
            Err(ControlError::NoPathAvailable(v)) => {
                prop_assert_eq!(v, VlanId(vlan));
                prop_assert!(!reachable(&t, VlanId(vlan), &off));
            }
            Err(e) => panic!("{e}"),
        }
    }

    #[test]
    fn queue_respects_capacity_and_order(
        cap_mbps in 1u64..2000,
        limit in 1500u64..20_000,
        arrivals in prop::collection::vec((0u64..200_000, 64u32..1500), 1..60),
    ) {
        let mut t = Topology::default();
        let a = t.add_node("a", NodeKind::AggregationSwitch);
        let b = t.add_node("b", NodeKind::AggregationSwitch);
        let link = Link::new(a, b, cap_mbps * 1_000_000, SimTime::from_micros(3)).with_buffer(limit);
        let mut q: EgressQueue<u32> = EgressQueue::new(LinkId(0), &link, a);
        let mut at = SimTime::ZERO;
        let mut last_departure = SimTime::ZERO;
        let mut in_queue: Vec<(SimTime, u32)> = Vec::new();
        for (i, (gap, size)) in arrivals.into_iter().enumerate() {
            at += SimTime::from_nanos(gap);
            in_queue.retain(|(d, _)| *d > at);
            let backlog: u64 = in_queue.iter().map(|(_, s)| *s as u64).sum();
            match q.enqueue(i as u32, size, at) {
                EnqueueResult::Accepted { departure, arrival } => {
                    prop_assert!(backlog + size as u64 <= limit);
                    let start = at.max(last_departure);
                    prop_assert_eq!(departure, start + serialization_time(size as u64, cap_mbps * 1_000_000));
                    prop_assert_eq!(arrival, departure + SimTime::from_micros(3));
                    last_departure = departure;
                    in_queue.push((departure, size));
                }
                EnqueueResult::Dropped(_) => prop_assert!(backlog + size as u64 > limit),
            }
            prop_assert!(q.occupancy(at) <= limit);
        }
    }

    #[test]
    fn pmf_sums_to_one_and_ignores_order(
        mut samples in prop::collection::vec(0u64..200_000_000, 1..80),
        width_ms in 1u64..30,
        rot in 0usize..80,
    ) {
        let s: Vec<SimTime> = samples.iter().map(|&n| SimTime::from_nanos(n)).collect();
        let w = SimTime::from_millis(width_ms);
        let a = pmf(&s, w).unwrap();
        prop_assert!((a.total() - 1.0).abs() < 1e-12);
        prop_assert!(a.bins.iter().all(|(_, p)| *p >= 0.0));
        prop_assert!((a.mass_between(SimTime::ZERO, SimTime::MAX) - 1.0).abs() < 1e-12);
        let k = rot % samples.len();
        samples.rotate_left(k);
        samples.reverse();
        let s2: Vec<SimTime> = samples.iter().map(|&n| SimTime::from_nanos(n)).collect();
        prop_assert_eq!(&a, &pmf(&s2, w).unwrap());
        prop_assert_eq!(median(&s), median(&s2));
    }

    #[test]
    fn savings_are_bounded_monotone_and_scale_free(
        olt_on in 0.1f64..20.0, olt_frac in 0.0f64..=1.0,
        onu_on in 0.0f64..10.0, onu_frac in 0.0f64..=1.0,
        t_on in 0.0f64..1e5, t_off in 0.0f64..1e5, extra in 0.0f64..1e4, k in 1e-3f64..1e3,
    ) {
        prop_assume!(t_on + t_off > 0.0);
        let m = PowerModel {
            p_olt_on: olt_on,
            p_olt_off: olt_on * olt_frac,
            p_onu_on: onu_on,
            p_onu_off: onu_on * onu_frac,
        };
        prop_assert!(m.validate().is_ok());
        let d = DutyCycle { t_on, t_off };
        let eta = energy_savings(&m, &d);
        prop_assert!((-1e-12..1.0).contains(&eta));
        let more_off = DutyCycle { t_on, t_off: t_off + extra };
        prop_assert!(energy_savings(&m, &more_off) >= eta - 1e-12);
        let scaled = DutyCycle { t_on: k * t_on, t_off: k * t_off };
        prop_assert!((energy_savings(&m, &scaled) - eta).abs() < 1e-12);
        let deeper = PowerModel { p_olt_off: m.p_olt_off * 0.5, ..m };
        prop_assert!(energy_savings(&deeper, &d) >= eta - 1e-12);
    }
}
