use std::collections::BTreeMap;
use std::fmt;

use super::{label_or_id, ControlRole, LinkKind, NodeId, NodeKind, PathStatus, Topology};

/// One broken structural rule.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    DuplicateLabel(String),
    DanglingLink { link: usize },
    SelfLoop { link: usize, node: String },
    ZeroCapacity { link: usize },
    ZeroBuffer { link: usize },
    ControllerCount { kind: NodeKind, count: usize },
    OnuLineCards { onu: String, count: usize },
    EmptyVlan { vlan: String },
    VlanUnknownHop { vlan: String, hop_index: usize },
    VlanMissingLink { vlan: String, hop_index: usize, from: String, to: String },
    VlanBadHead { vlan: String, node: String },
    VlanBadTail { vlan: String, node: String },
    DuplicateActiveVlan { vlan_id: u16 },
    BearerNotUe { node: String },
    BearerUnknownVlan { vlan_id: u16 },
    BearerNotAttached { ue: String, vlan: String },
    MissingControlChannel { from: ControlRole, to: ControlRole },
    ControlChannelBand { from: ControlRole, to: ControlRole, expected_in_band: bool },
    ControllerNotAttached { node: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Violation::*;
        match self {
            DuplicateLabel(l) => write!(f, "node label '{l}' is used more than once"),
            DanglingLink { link } => write!(f, "link {link} references a node that does not exist"),
            SelfLoop { link, node } => write!(f, "link {link} joins '{node}' to itself"),
            ZeroCapacity { link } => write!(f, "link {link} has zero capacity"),
            ZeroBuffer { link } => write!(f, "link {link} has a zero-byte buffer"),
            ControllerCount { kind, count } => {
                write!(f, "expected exactly one {kind:?}, found {count}")
            }
            OnuLineCards { onu, count } => write!(
                f,
                "ONU '{onu}' must be linked to exactly one OLT line card, found {count}"
            ),
            EmptyVlan { vlan } => write!(f, "VLAN path '{vlan}' has no hops"),
            VlanUnknownHop { vlan, hop_index } => {
                write!(f, "VLAN path '{vlan}' hop {hop_index} is not a node")
            }
            VlanMissingLink {
                vlan,
                hop_index,
                from,
                to,
            } => write!(
                f,
                "VLAN path '{vlan}': no link between hop {hop_index} '{from}' and hop {} '{to}'",
                hop_index + 1
            ),
            VlanBadHead { vlan, node } => write!(
                f,
                "VLAN path '{vlan}' starts at '{node}', which is not an access node"
            ),
            VlanBadTail { vlan, node } => write!(
                f,
                "VLAN path '{vlan}' ends at '{node}', which is not an NF server"
            ),
            DuplicateActiveVlan { vlan_id } => {
                write!(f, "more than one active path for VLAN {vlan_id}")
            }
            BearerNotUe { node } => write!(f, "bearer endpoint '{node}' is not a UE host"),
            BearerUnknownVlan { vlan_id } => {
                write!(f, "bearer refers to VLAN {vlan_id}, which has no active path")
            }
            BearerNotAttached { ue, vlan } => write!(
                f,
                "UE '{ue}' cannot reach the head of VLAN path '{vlan}' through an access switch"
            ),
            MissingControlChannel { from, to } => {
                write!(f, "no control channel {from:?} -> {to:?}")
            }
            ControlChannelBand {
                from,
                to,
                expected_in_band,
            } => write!(
                f,
                "control channel {from:?} -> {to:?} must be {}",
                if *expected_in_band { "in-band" } else { "out-of-band" }
            ),
            ControllerNotAttached { node } => write!(
                f,
                "controller '{node}' has no control link to its peer"
            ),
        }
    }
}

/// Every invariant the topology breaks. Empty means valid.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Checks every structural rule; never stops at the first failure.
pub fn validate(t: &Topology) -> ValidationReport {
    let mut out = Vec::new();

    let mut seen = BTreeMap::new();
    for n in t.nodes() {
        *seen.entry(n.label.as_str()).or_insert(0usize) += 1;
    }
    for n in t.nodes() {
        // Zeroing the count reports each duplicated label once.
        if let Some(c) = seen.get_mut(n.label.as_str()).filter(|c| **c > 1) {
            *c = 0;
            out.push(Violation::DuplicateLabel(n.label.clone()));
        }
    }

    let mut links_ok = true;
    for (i, l) in t.links().iter().enumerate() {
        if !t.contains(l.a) || !t.contains(l.b) {
            out.push(Violation::DanglingLink { link: i });
            links_ok = false;
            continue;
        }
        if l.a == l.b {
            out.push(Violation::SelfLoop {
                link: i,
                node: t.label(l.a).to_string(),
            });
        }
        if l.capacity_bps == 0 && l.kind != LinkKind::Control {
            out.push(Violation::ZeroCapacity { link: i });
        }
        if l.buffer_limit == 0 {
            out.push(Violation::ZeroBuffer { link: i });
        }
    }

    for kind in [NodeKind::LitController, NodeKind::SdnController] {
        let count = t.nodes_of_kind(kind).count();
        if count != 1 {
            out.push(Violation::ControllerCount { kind, count });
        }
    }

    if links_ok {
        for onu in t.nodes_of_kind(NodeKind::Onu) {
            let count = t
                .neighbors(onu)
                .filter(|(n, _)| t.kind(*n) == NodeKind::OltLineCard)
                .count();
            if count != 1 {
                out.push(Violation::OnuLineCards {
                    onu: t.label(onu).to_string(),
                    count,
                });
            }
        }
    }

    let mut active = BTreeMap::new();
    for p in t.vlans() {
        if p.status == PathStatus::Active {
            *active.entry(p.vlan_id.0).or_insert(0usize) += 1;
        }
        let Some(&head) = p.hops.first() else {
            out.push(Violation::EmptyVlan {
                vlan: p.name.clone(),
            });
            continue;
        };
        if let Some(i) = p.hops.iter().position(|h| !t.contains(*h)) {
            out.push(Violation::VlanUnknownHop {
                vlan: p.name.clone(),
                hop_index: i,
            });
            continue;
        }
        if !matches!(t.kind(head), NodeKind::Onu | NodeKind::AccessSwitch) {
            out.push(Violation::VlanBadHead {
                vlan: p.name.clone(),
                node: t.label(head).to_string(),
            });
        }
        let tail = *p.hops.last().unwrap();
        if t.kind(tail) != NodeKind::NfServer {
            out.push(Violation::VlanBadTail {
                vlan: p.name.clone(),
                node: t.label(tail).to_string(),
            });
        }
        if links_ok {
            for (i, w) in p.hops.windows(2).enumerate() {
                if t.link_between(w[0], w[1]).is_none() {
                    out.push(Violation::VlanMissingLink {
                        vlan: p.name.clone(),
                        hop_index: i,
                        from: label_or_id(t, w[0]),
                        to: label_or_id(t, w[1]),
                    });
                }
            }
        }
    }
    for (vlan_id, n) in active {
        if n > 1 {
            out.push(Violation::DuplicateActiveVlan { vlan_id });
        }
    }

    for b in t.bearers() {
        if !t.contains(b.ue) || t.kind(b.ue) != NodeKind::UeHost {
            out.push(Violation::BearerNotUe {
                node: label_or_id(t, b.ue),
            });
            continue;
        }
        let Some(path) = t.vlan(b.vlan_id) else {
            out.push(Violation::BearerUnknownVlan {
                vlan_id: b.vlan_id.0,
            });
            continue;
        };
        if links_ok && !ue_reaches(t, b.ue, path.hops[0]) {
            out.push(Violation::BearerNotAttached {
                ue: t.label(b.ue).to_string(),
                vlan: path.name.clone(),
            });
        }
    }

    check_control(t, links_ok, &mut out);

    ValidationReport { violations: out }
}

/// A UE reaches a path head directly or through one access switch.
fn ue_reaches(t: &Topology, ue: NodeId, head: NodeId) -> bool {
    if t.link_between(ue, head).is_some() {
        return true;
    }
    t.neighbors(ue).any(|(sw, _)| {
        t.kind(sw) == NodeKind::AccessSwitch && t.link_between(sw, head).is_some()
    })
}

fn check_control(t: &Topology, links_ok: bool, out: &mut Vec<Violation>) {
    let expected = [
        (ControlRole::OltAgent, ControlRole::LitController, true),
        (ControlRole::LitController, ControlRole::SdnController, false),
    ];
    for (from, to, in_band) in expected {
        match t
            .control_channels()
            .iter()
            .find(|c| c.from == from && c.to == to)
        {
            None => out.push(Violation::MissingControlChannel { from, to }),
            Some(c) if c.in_band != in_band => out.push(Violation::ControlChannelBand {
                from,
                to,
                expected_in_band: in_band,
            }),
            Some(_) => {}
        }
    }
    if !links_ok {
        return;
    }
    // The LiT controller hangs off the aggregation node (in-band side) and
    // has a dedicated link to the SDN controller (out-of-band side).
    if let (Some(lit), Some(sdn)) = (t.lit_controller(), t.sdn_controller()) {
        let agg_attached = t
            .neighbors(lit)
            .any(|(n, _)| t.kind(n) == NodeKind::AggregationL2Switch);
        if !agg_attached {
            out.push(Violation::ControllerNotAttached {
                node: t.label(lit).to_string(),
            });
        }
        if t.link_between(lit, sdn).is_none() {
            out.push(Violation::ControllerNotAttached {
                node: t.label(sdn).to_string(),
            });
        }
    }
}
