//! Node/link graph of the fronthaul, VLAN path declarations and the
//! reference testbed topology.

mod doc;
mod reference;
mod validate;

pub use doc::{LinkDoc, NodeDoc, TopologyDoc, VlanDoc};
pub use reference::{build_reference_topology, ReferenceParams, REFERENCE_TOPOLOGY_JSON};
pub use validate::{validate, ValidationReport, Violation};

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::time::SimTime;

/// Default per-direction egress buffer, in bytes.
pub const DEFAULT_BUFFER_LIMIT: u64 = 262_142;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LinkId(pub u32);

impl LinkId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// 802.1Q tag carried by every data-plane frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VlanId(pub u16);

impl fmt::Display for VlanId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    UeHost,
    AccessSwitch,
    Onu,
    OltLineCard,
    TunnelEndpoint,
    AggregationL2Switch,
    AggregationSwitch,
    NfServer,
    LitController,
    SdnController,
}

impl NodeKind {
    /// Devices that forward through an OpenFlow-style flow table.
    pub fn is_switch(self) -> bool {
        matches!(
            self,
            NodeKind::AccessSwitch | NodeKind::AggregationL2Switch | NodeKind::AggregationSwitch
        )
    }

    /// Traffic sources and sinks.
    pub fn is_host(self) -> bool {
        matches!(
            self,
            NodeKind::UeHost | NodeKind::NfServer | NodeKind::TunnelEndpoint
        )
    }

    pub fn is_controller(self) -> bool {
        matches!(self, NodeKind::LitController | NodeKind::SdnController)
    }

    /// PON devices the OLT can put to sleep.
    pub fn is_power_managed(self) -> bool {
        matches!(self, NodeKind::Onu | NodeKind::OltLineCard)
    }

    /// Two-port PON devices that pass frames through without a table.
    pub fn is_transparent(self) -> bool {
        self.is_power_managed()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub label: String,
    pub kind: NodeKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkKind {
    /// Ordinary Ethernet or PON segment.
    Data,
    /// Fixed-rate tunnel between an OLT line card and the aggregation node.
    /// The sending queues belong to always-on tunnel hosts, so they are not
    /// flushed when the attached line card sleeps.
    Tunnel,
    /// Controller attachment; never carries bearer traffic.
    Control,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Link {
    pub a: NodeId,
    pub b: NodeId,
    pub capacity_bps: u64,
    pub propagation: SimTime,
    /// Per egress direction.
    pub buffer_limit: u64,
    pub kind: LinkKind,
}

impl Link {
    pub fn new(a: NodeId, b: NodeId, capacity_bps: u64, propagation: SimTime) -> Self {
        Link {
            a,
            b,
            capacity_bps,
            propagation,
            buffer_limit: DEFAULT_BUFFER_LIMIT,
            kind: LinkKind::Data,
        }
    }

    pub fn with_kind(mut self, kind: LinkKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn with_buffer(mut self, bytes: u64) -> Self {
        self.buffer_limit = bytes;
        self
    }

    pub fn joins(&self, x: NodeId, y: NodeId) -> bool {
        (self.a == x && self.b == y) || (self.a == y && self.b == x)
    }

    pub fn other(&self, end: NodeId) -> Option<NodeId> {
        if self.a == end {
            Some(self.b)
        } else if self.b == end {
            Some(self.a)
        } else {
            None
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathStatus {
    Active,
    Superseded,
}

/// An ordered hop list from the access ONU to the network-function server,
/// bound to a VLAN tag. This is the unit the controllers reconfigure.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VlanPath {
    pub vlan_id: VlanId,
    pub name: String,
    pub hops: Vec<NodeId>,
    pub status: PathStatus,
}

impl VlanPath {
    pub fn new(vlan_id: VlanId, name: impl Into<String>, hops: Vec<NodeId>) -> Self {
        VlanPath {
            vlan_id,
            name: name.into(),
            hops,
            status: PathStatus::Active,
        }
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.hops.contains(&node)
    }

    pub fn head(&self) -> Option<NodeId> {
        self.hops.first().copied()
    }

    pub fn tail(&self) -> Option<NodeId> {
        self.hops.last().copied()
    }

    /// Hop following `node` on the way to the server.
    pub fn next_after(&self, node: NodeId) -> Option<NodeId> {
        let i = self.hops.iter().position(|&h| h == node)?;
        self.hops.get(i + 1).copied()
    }
}

/// A user equipment whose traffic rides a VLAN.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bearer {
    pub ue: NodeId,
    pub vlan_id: VlanId,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlRole {
    OltAgent,
    LitController,
    SdnController,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlChannel {
    pub from: ControlRole,
    pub to: ControlRole,
    pub in_band: bool,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TopologyError {
    #[error("no link joins hop {hop_index} ({from}) and hop {} ({to})", hop_index + 1)]
    MissingLink {
        hop_index: usize,
        from: String,
        to: String,
    },
    #[error("unknown node '{0}'")]
    UnknownNode(String),
    #[error("duplicate node label '{0}'")]
    DuplicateLabel(String),
    #[error("unknown VLAN {0}")]
    UnknownVlan(VlanId),
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Topology {
    nodes: Vec<Node>,
    links: Vec<Link>,
    vlans: Vec<VlanPath>,
    bearers: Vec<Bearer>,
    control_channels: Vec<ControlChannel>,
}

impl Topology {
    pub fn new() -> Self {
        Self::default()
    }

    /// Node ids are dense and assigned in insertion order.
    pub fn add_node(&mut self, label: impl Into<String>, kind: NodeKind) -> NodeId {
        let id = NodeId(self.nodes.len() as u32);
        self.nodes.push(Node {
            id,
            label: label.into(),
            kind,
        });
        id
    }

    pub fn add_link(&mut self, link: Link) -> LinkId {
        let id = LinkId(self.links.len() as u32);
        self.links.push(link);
        id
    }

    pub fn add_vlan(&mut self, path: VlanPath) {
        self.vlans.push(path);
    }

    pub fn add_bearer(&mut self, bearer: Bearer) {
        self.bearers.push(bearer);
    }

    pub fn add_control_channel(&mut self, ch: ControlChannel) {
        self.control_channels.push(ch);
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn links_mut(&mut self) -> &mut [Link] {
        &mut self.links
    }

    pub fn vlans(&self) -> &[VlanPath] {
        &self.vlans
    }

    pub fn bearers(&self) -> &[Bearer] {
        &self.bearers
    }

    pub fn control_channels(&self) -> &[ControlChannel] {
        &self.control_channels
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.index()]
    }

    pub fn contains(&self, id: NodeId) -> bool {
        id.index() < self.nodes.len()
    }

    pub fn kind(&self, id: NodeId) -> NodeKind {
        self.node(id).kind
    }

    pub fn label(&self, id: NodeId) -> &str {
        &self.node(id).label
    }

    pub fn find(&self, label: &str) -> Option<NodeId> {
        self.nodes.iter().find(|n| n.label == label).map(|n| n.id)
    }

    pub fn lookup(&self, label: &str) -> Result<NodeId, TopologyError> {
        self.find(label)
            .ok_or_else(|| TopologyError::UnknownNode(label.to_string()))
    }

    pub fn link(&self, id: LinkId) -> &Link {
        &self.links[id.index()]
    }

    pub fn link_between(&self, a: NodeId, b: NodeId) -> Option<LinkId> {
        self.links
            .iter()
            .position(|l| l.joins(a, b))
            .map(|i| LinkId(i as u32))
    }

    /// Neighbours of `id` in link order.
    pub fn neighbors(&self, id: NodeId) -> impl Iterator<Item = (NodeId, LinkId)> + '_ {
        self.links
            .iter()
            .enumerate()
            .filter_map(move |(i, l)| l.other(id).map(|n| (n, LinkId(i as u32))))
    }

    pub fn nodes_of_kind(&self, kind: NodeKind) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes
            .iter()
            .filter(move |n| n.kind == kind)
            .map(|n| n.id)
    }

    fn unique_of_kind(&self, kind: NodeKind) -> Option<NodeId> {
        let mut it = self.nodes_of_kind(kind);
        let first = it.next()?;
        it.next().is_none().then_some(first)
    }

    pub fn lit_controller(&self) -> Option<NodeId> {
        self.unique_of_kind(NodeKind::LitController)
    }

    pub fn sdn_controller(&self) -> Option<NodeId> {
        self.unique_of_kind(NodeKind::SdnController)
    }

    pub fn aggregation_node(&self) -> Option<NodeId> {
        self.unique_of_kind(NodeKind::AggregationL2Switch)
    }

    /// The active path provisioned for `vlan_id`.
    pub fn vlan(&self, vlan_id: VlanId) -> Option<&VlanPath> {
        self.vlans
            .iter()
            .find(|p| p.vlan_id == vlan_id && p.status == PathStatus::Active)
    }

    pub fn bearer_for(&self, vlan_id: VlanId) -> Option<Bearer> {
        self.bearers.iter().copied().find(|b| b.vlan_id == vlan_id)
    }

    pub fn labels(&self, hops: &[NodeId]) -> Vec<&str> {
        hops.iter().map(|&h| self.label(h)).collect()
    }

    /// Renders a hop list as `A-B-C`.
    pub fn path_string(&self, hops: &[NodeId]) -> String {
        self.labels(hops).join("-")
    }
}

/// Links joining consecutive hops of `path`, in hop order.
pub fn path_links(topology: &Topology, path: &VlanPath) -> Result<Vec<LinkId>, TopologyError> {
    path.hops
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            topology
                .link_between(w[0], w[1])
                .ok_or_else(|| TopologyError::MissingLink {
                    hop_index: i,
                    from: label_or_id(topology, w[0]),
                    to: label_or_id(topology, w[1]),
                })
        })
        .collect()
}

pub(crate) fn label_or_id(topology: &Topology, id: NodeId) -> String {
    if topology.contains(id) {
        topology.label(id).to_string()
    } else {
        id.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vlan2b_spans_five_links() {
        let t = build_reference_topology();
        let hops = ["ONU1", "LC1", "L2SW", "s1", "s3", "NF2"]
            .iter()
            .map(|l| t.find(l).unwrap())
            .collect();
        let p = VlanPath::new(VlanId(2), "VLAN2b", hops);
        let links = path_links(&t, &p).unwrap();
        assert_eq!(links.len(), 5);
        for (i, lid) in links.iter().enumerate() {
            assert!(t.link(*lid).joins(p.hops[i], p.hops[i + 1]));
        }
    }

    #[test]
    fn single_hop_path_has_no_links() {
        let t = build_reference_topology();
        let p = VlanPath::new(VlanId(9), "solo", vec![t.find("NF2").unwrap()]);
        assert!(path_links(&t, &p).unwrap().is_empty());
    }

    #[test]
    fn fabricated_hop_reports_missing_link() {
        let t = build_reference_topology();
        let hops = vec![
            t.find("ONU1").unwrap(),
            t.find("LC1").unwrap(),
            t.find("s3").unwrap(),
        ];
        let p = VlanPath::new(VlanId(2), "bogus", hops);
        assert_eq!(
            path_links(&t, &p),
            Err(TopologyError::MissingLink {
                hop_index: 1,
                from: "LC1".into(),
                to: "s3".into()
            })
        );
    }

    #[test]
    fn neighbours_in_link_order() {
        let t = build_reference_topology();
        let l2sw = t.find("L2SW").unwrap();
        let labels: Vec<_> = t.neighbors(l2sw).map(|(n, _)| t.label(n)).collect();
        assert_eq!(labels, ["LC1", "LC2", "s1", "s2", "LitCtrl"]);
    }
}
