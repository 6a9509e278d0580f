use serde::{Deserialize, Serialize};

use super::{
    Bearer, ControlChannel, ControlRole, Link, LinkKind, NodeKind, Topology, VlanId, VlanPath,
    DEFAULT_BUFFER_LIMIT,
};
use crate::time::SimTime;

/// The bundled reference testbed as a JSON topology document.
pub const REFERENCE_TOPOLOGY_JSON: &str = include_str!("../../topologies/reference.json");

/// Link parameters of the reference testbed. The testbed publishes the PON
/// and tunnel rates; aggregation capacities and all propagation delays are
/// defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReferenceParams {
    pub access_capacity_bps: u64,
    pub access_propagation_s: f64,
    pub pon_capacity_bps: u64,
    pub pon_propagation_s: f64,
    pub tunnel_capacity_bps: u64,
    pub tunnel_propagation_s: f64,
    /// L2SW to s1/s2.
    pub uplink_capacity_bps: u64,
    /// s1/s2 to s3.
    pub core_capacity_bps: u64,
    pub server_capacity_bps: u64,
    pub aggregation_propagation_s: f64,
    pub control_capacity_bps: u64,
    pub buffer_limit_bytes: u64,
}

impl Default for ReferenceParams {
    fn default() -> Self {
        ReferenceParams {
            access_capacity_bps: 1_000_000_000,
            access_propagation_s: 1e-6,
            pon_capacity_bps: 1_000_000_000,
            pon_propagation_s: 5e-6,
            tunnel_capacity_bps: 100_000_000,
            tunnel_propagation_s: 0.0,
            uplink_capacity_bps: 1_000_000_000,
            core_capacity_bps: 5_000_000_000,
            server_capacity_bps: 1_000_000_000,
            aggregation_propagation_s: 1e-6,
            control_capacity_bps: 1_000_000_000,
            buffer_limit_bytes: DEFAULT_BUFFER_LIMIT,
        }
    }
}

/// The reference testbed with default link parameters.
pub fn build_reference_topology() -> Topology {
    ReferenceParams::default().build()
}

impl ReferenceParams {
    /// Node order (and therefore ids) is fixed: UE1, UE2, ASW, ONU1, ONU2,
    /// LC1, LC2, L2SW, s1, s2, s3, NF1, NF2, LitCtrl, SdnCtrl.
    pub fn build(&self) -> Topology {
        use NodeKind::*;
        let mut t = Topology::new();
        let ue1 = t.add_node("UE1", UeHost);
        let ue2 = t.add_node("UE2", UeHost);
        let asw = t.add_node("ASW", AccessSwitch);
        let onu1 = t.add_node("ONU1", Onu);
        let onu2 = t.add_node("ONU2", Onu);
        let lc1 = t.add_node("LC1", OltLineCard);
        let lc2 = t.add_node("LC2", OltLineCard);
        let l2sw = t.add_node("L2SW", AggregationL2Switch);
        let s1 = t.add_node("s1", AggregationSwitch);
        let s2 = t.add_node("s2", AggregationSwitch);
        let s3 = t.add_node("s3", AggregationSwitch);
        let nf1 = t.add_node("NF1", NfServer);
        let nf2 = t.add_node("NF2", NfServer);
        let lit = t.add_node("LitCtrl", LitController);
        let sdn = t.add_node("SdnCtrl", SdnController);

        let buf = self.buffer_limit_bytes;
        let mut link = |a, b, cap, prop: f64, kind| {
            t.add_link(
                Link::new(a, b, cap, SimTime::from_secs_f64(prop))
                    .with_kind(kind)
                    .with_buffer(buf),
            );
        };
        let acc = (self.access_capacity_bps, self.access_propagation_s);
        link(ue1, asw, acc.0, acc.1, LinkKind::Data);
        link(ue2, asw, acc.0, acc.1, LinkKind::Data);
        link(asw, onu1, acc.0, acc.1, LinkKind::Data);
        link(asw, onu2, acc.0, acc.1, LinkKind::Data);
        let pon = (self.pon_capacity_bps, self.pon_propagation_s);
        link(onu1, lc1, pon.0, pon.1, LinkKind::Data);
        link(onu2, lc2, pon.0, pon.1, LinkKind::Data);
        let tun = (self.tunnel_capacity_bps, self.tunnel_propagation_s);
        link(lc1, l2sw, tun.0, tun.1, LinkKind::Tunnel);
        link(lc2, l2sw, tun.0, tun.1, LinkKind::Tunnel);
        let prop = self.aggregation_propagation_s;
        link(l2sw, s1, self.uplink_capacity_bps, prop, LinkKind::Data);
        link(l2sw, s2, self.uplink_capacity_bps, prop, LinkKind::Data);
        link(s1, s3, self.core_capacity_bps, prop, LinkKind::Data);
        link(s2, s3, self.core_capacity_bps, prop, LinkKind::Data);
        link(s1, nf1, self.server_capacity_bps, prop, LinkKind::Data);
        link(s3, nf2, self.server_capacity_bps, prop, LinkKind::Data);
        link(l2sw, lit, self.control_capacity_bps, 0.0, LinkKind::Control);
        link(lit, sdn, self.control_capacity_bps, 0.0, LinkKind::Control);

        t.add_vlan(VlanPath::new(
            VlanId(1),
            "VLAN1",
            vec![onu1, lc1, l2sw, s1, nf1],
        ));
        t.add_vlan(VlanPath::new(
            VlanId(2),
            "VLAN2a",
            vec![onu2, lc2, l2sw, s2, s3, nf2],
        ));
        t.add_bearer(Bearer {
            ue: ue1,
            vlan_id: VlanId(1),
        });
        t.add_bearer(Bearer {
            ue: ue2,
            vlan_id: VlanId(2),
        });
        t.add_control_channel(ControlChannel {
            from: ControlRole::OltAgent,
            to: ControlRole::LitController,
            in_band: true,
        });
        t.add_control_channel(ControlChannel {
            from: ControlRole::LitController,
            to: ControlRole::SdnController,
            in_band: false,
        });
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{path_links, validate, TopologyDoc};

    #[test]
    fn fixed_counts() {
        let t = build_reference_topology();
        assert_eq!(t.nodes().len(), 15);
        assert_eq!(t.links().len(), 16);
        assert_eq!(t.nodes_of_kind(NodeKind::Onu).count(), 2);
        assert_eq!(t.nodes_of_kind(NodeKind::OltLineCard).count(), 2);
        assert_eq!(t.nodes_of_kind(NodeKind::AggregationSwitch).count(), 3);
    }

    #[test]
    fn vlan2a_ends_at_nf2() {
        let t = build_reference_topology();
        let p = t.vlan(VlanId(2)).unwrap();
        assert_eq!(t.label(p.tail().unwrap()), "NF2");
        assert_eq!(t.path_string(&p.hops), "ONU2-LC2-L2SW-s2-s3-NF2");
    }

    #[test]
    fn tunnels_run_at_100_mbps() {
        let t = build_reference_topology();
        let tunnels: Vec<_> = t
            .links()
            .iter()
            .filter(|l| l.kind == LinkKind::Tunnel)
            .collect();
        assert_eq!(tunnels.len(), 2);
        assert!(tunnels.iter().all(|l| l.capacity_bps == 100_000_000));
    }

    #[test]
    fn deterministic() {
        assert_eq!(build_reference_topology(), build_reference_topology());
    }

    #[test]
    fn bundled_document_matches_builder() {
        let doc: TopologyDoc = serde_json::from_str(REFERENCE_TOPOLOGY_JSON).unwrap();
        assert_eq!(doc.to_topology().unwrap(), build_reference_topology());
    }

    #[test]
    fn active_paths_have_links() {
        let t = build_reference_topology();
        assert!(validate(&t).is_valid());
        for p in t.vlans() {
            assert_eq!(path_links(&t, p).unwrap().len(), p.hops.len() - 1);
        }
    }
}
