//! Label-based JSON form of a [`Topology`].

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{
    Bearer, ControlChannel, Link, LinkKind, NodeId, NodeKind, PathStatus, Topology,
    TopologyError, VlanId, VlanPath, DEFAULT_BUFFER_LIMIT,
};
use crate::time::SimTime;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeDoc {
    pub label: String,
    pub kind: NodeKind,
}

fn default_buffer() -> u64 {
    DEFAULT_BUFFER_LIMIT
}

fn default_link_kind() -> LinkKind {
    LinkKind::Data
}

fn default_status() -> PathStatus {
    PathStatus::Active
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkDoc {
    pub a: String,
    pub b: String,
    pub capacity_bps: u64,
    #[serde(default)]
    pub propagation_s: f64,
    #[serde(default = "default_buffer")]
    pub buffer_bytes: u64,
    #[serde(default = "default_link_kind")]
    pub kind: LinkKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VlanDoc {
    pub name: String,
    pub vlan: u16,
    pub hops: Vec<String>,
    #[serde(default = "default_status")]
    pub status: PathStatus,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BearerDoc {
    pub ue: String,
    pub vlan: u16,
}

/// Nodes are referenced by label; ids follow array order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyDoc {
    pub nodes: Vec<NodeDoc>,
    pub links: Vec<LinkDoc>,
    #[serde(default)]
    pub vlans: Vec<VlanDoc>,
    #[serde(default)]
    pub bearers: Vec<BearerDoc>,
    #[serde(default)]
    pub control_channels: Vec<ControlChannel>,
}

impl TopologyDoc {
    pub fn to_topology(&self) -> Result<Topology, TopologyError> {
        let mut t = Topology::new();
        let mut seen = BTreeSet::new();
        for n in &self.nodes {
            if !seen.insert(n.label.as_str()) {
                return Err(TopologyError::DuplicateLabel(n.label.clone()));
            }
            t.add_node(n.label.clone(), n.kind);
        }
        for l in &self.links {
            let a = t.lookup(&l.a)?;
            let b = t.lookup(&l.b)?;
            t.add_link(Link {
                a,
                b,
                capacity_bps: l.capacity_bps,
                propagation: SimTime::from_secs_f64(l.propagation_s),
                buffer_limit: l.buffer_bytes,
                kind: l.kind,
            });
        }
        for v in &self.vlans {
            let hops = v
                .hops
                .iter()
                .map(|h| t.lookup(h))
                .collect::<Result<Vec<NodeId>, _>>()?;
            let mut p = VlanPath::new(VlanId(v.vlan), v.name.clone(), hops);
            p.status = v.status;
            t.add_vlan(p);
        }
        for b in &self.bearers {
            let ue = t.lookup(&b.ue)?;
            t.add_bearer(Bearer {
                ue,
                vlan_id: VlanId(b.vlan),
            });
        }
        for c in &self.control_channels {
            t.add_control_channel(*c);
        }
        Ok(t)
    }

    pub fn from_topology(t: &Topology) -> Self {
        let label = |id: NodeId| t.label(id).to_string();
        TopologyDoc {
            nodes: t
                .nodes()
                .iter()
                .map(|n| NodeDoc {
                    label: n.label.clone(),
                    kind: n.kind,
                })
                .collect(),
            links: t
                .links()
                .iter()
                .map(|l| LinkDoc {
                    a: label(l.a),
                    b: label(l.b),
                    capacity_bps: l.capacity_bps,
                    propagation_s: l.propagation.as_secs_f64(),
                    buffer_bytes: l.buffer_limit,
                    kind: l.kind,
                })
                .collect(),
            vlans: t
                .vlans()
                .iter()
                .map(|v| VlanDoc {
                    name: v.name.clone(),
                    vlan: v.vlan_id.0,
                    hops: v.hops.iter().map(|&h| label(h)).collect(),
                    status: v.status,
                })
                .collect(),
            bearers: t
                .bearers()
                .iter()
                .map(|b| BearerDoc {
                    ue: label(b.ue),
                    vlan: b.vlan_id.0,
                })
                .collect(),
            control_channels: t.control_channels().to_vec(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::build_reference_topology;

    #[test]
    fn roundtrip_through_json() {
        let t = build_reference_topology();
        let json = serde_json::to_string_pretty(&TopologyDoc::from_topology(&t)).unwrap();
        let back: TopologyDoc = serde_json::from_str(&json).unwrap();
        assert_eq!(back.to_topology().unwrap(), t);
    }

    #[test]
    fn unknown_label_is_named() {
        let mut doc = TopologyDoc::from_topology(&build_reference_topology());
        doc.links[0].b = "ASW9".into();
        assert_eq!(
            doc.to_topology(),
            Err(TopologyError::UnknownNode("ASW9".into()))
        );
    }
}
