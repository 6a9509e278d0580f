//! The OLT agent and the two controllers as message-driven state machines.
//!
//! Each handler maps `(message, state, now)` to a new state and a list of
//! outputs. Timing (processing delays, link delays, install latency) is the
//! event engine's job; handlers are called at the instant their processing
//! completes.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataplane::{DataplaneError, FlowEntry, FlowMatch, FlowModOp, PowerState, PowerTarget};
use crate::time::SimTime;
use crate::topology::{NodeId, NodeKind, PathStatus, Topology, VlanId, VlanPath};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Sleep,
    Wake,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlKind {
    SleepCommand,
    WakeCommand,
    OltNotify,
    FlowMod,
    Trigger,
    Ack,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Lit,
    Sdn,
}

/// OLT to LiT controller: a PON pair changed power state.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OltNotify {
    pub episode: u32,
    pub direction: Direction,
    pub onu: NodeId,
    pub lc: NodeId,
    /// VLANs whose bearers were attached through the pair.
    pub vlans: Vec<VlanId>,
}

/// LiT controller to SDN controller.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trigger {
    pub episode: u32,
    pub direction: Direction,
    /// Every device the LiT controller believes is not On.
    pub off: Vec<NodeId>,
    pub vlans: Vec<VlanId>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowMod {
    pub episode: u32,
    pub origin: Origin,
    pub switch: NodeId,
    pub op: FlowModOp,
}

/// SDN controller to LiT controller: reconfiguration finished.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ack {
    pub episode: u32,
    pub paths: Vec<(VlanId, Vec<NodeId>)>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ControlPayload {
    SleepCommand { onu: NodeId, lc: NodeId },
    WakeCommand { onu: NodeId, lc: NodeId },
    OltNotify(OltNotify),
    FlowMod(FlowMod),
    Trigger(Trigger),
    Ack(Ack),
}

impl ControlPayload {
    pub fn kind(&self) -> ControlKind {
        match self {
            ControlPayload::SleepCommand { .. } => ControlKind::SleepCommand,
            ControlPayload::WakeCommand { .. } => ControlKind::WakeCommand,
            ControlPayload::OltNotify(_) => ControlKind::OltNotify,
            ControlPayload::FlowMod(_) => ControlKind::FlowMod,
            ControlPayload::Trigger(_) => ControlKind::Trigger,
            ControlPayload::Ack(_) => ControlKind::Ack,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlMessage {
    pub sender: NodeId,
    pub receiver: NodeId,
    pub sent_at: SimTime,
    pub payload: ControlPayload,
}

impl ControlMessage {
    pub fn kind(&self) -> ControlKind {
        self.payload.kind()
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ControlError {
    #[error("device {0} is not in the topology")]
    UnknownDevice(NodeId),
    #[error("device {0} is not an ONU/line-card pair member")]
    NotPowerManaged(NodeId),
    #[error("no usable path for VLAN {0}")]
    NoPathAvailable(VlanId),
    #[error("VLAN {0} has no provisioned path")]
    UnknownVlan(VlanId),
    #[error("topology has no {0:?}")]
    MissingRole(NodeKind),
    #[error(transparent)]
    Dataplane(#[from] DataplaneError),
}

/// Minimum-hop path from a surviving ONU to the VLAN's NF server.
///
/// The provisioned path is kept whenever it avoids `off`. Otherwise a
/// breadth-first search from the server runs over line cards and
/// aggregation switches; among equally short routes the start ONU and
/// every following hop are chosen by smallest label.
pub fn compute_reroute(
    topology: &Topology,
    vlan_id: VlanId,
    off: &BTreeSet<NodeId>,
) -> Result<VlanPath, ControlError> {
    let home = topology
        .vlan(vlan_id)
        .ok_or(ControlError::UnknownVlan(vlan_id))?;
    if !home.hops.iter().any(|h| off.contains(h)) {
        return Ok(home.clone());
    }
    let target = home.tail().ok_or(ControlError::UnknownVlan(vlan_id))?;
    let usable = |n: NodeId| {
        !off.contains(&n)
            && matches!(
                topology.kind(n),
                NodeKind::OltLineCard | NodeKind::AggregationL2Switch | NodeKind::AggregationSwitch
            )
    };

    let n = topology.nodes().len();
    let mut dist = vec![usize::MAX; n];
    dist[target.index()] = 0;
    let mut queue = VecDeque::from([target]);
    while let Some(u) = queue.pop_front() {
        for (v, _) in topology.neighbors(u) {
            if dist[v.index()] != usize::MAX {
                continue;
            }
            let is_source = topology.kind(v) == NodeKind::Onu && !off.contains(&v);
            if is_source || usable(v) {
                dist[v.index()] = dist[u.index()] + 1;
                if !is_source {
                    queue.push_back(v);
                }
            }
        }
    }

    let by_label = |a: &NodeId, b: &NodeId| topology.label(*a).cmp(topology.label(*b));
    let start = topology
        .nodes_of_kind(NodeKind::Onu)
        .filter(|o| dist[o.index()] != usize::MAX)
        .min_by(|a, b| dist[a.index()].cmp(&dist[b.index()]).then(by_label(a, b)))
        .ok_or(ControlError::NoPathAvailable(vlan_id))?;

    let mut hops = vec![start];
    let mut cur = start;
    while cur != target {
        let want = dist[cur.index()] - 1;
        cur = topology
            .neighbors(cur)
            .map(|(v, _)| v)
            .filter(|v| dist[v.index()] == want && (*v == target || usable(*v)))
            .min_by(by_label)
            .expect("a BFS predecessor always exists");
        hops.push(cur);
    }
    Ok(VlanPath {
        vlan_id,
        name: topology.path_string(&hops),
        hops,
        status: PathStatus::Active,
    })
}

/// Flow entries a path needs on each switch hop, in hop order.
pub fn path_entries(topology: &Topology, hops: &[NodeId], vlan_id: VlanId) -> Vec<(NodeId, FlowEntry)> {
    let mut out = Vec::new();
    for i in 1..hops.len().saturating_sub(1) {
        let sw = hops[i];
        if !topology.kind(sw).is_switch() {
            continue;
        }
        out.push((sw, FlowEntry::output(hops[i - 1], vlan_id, hops[i + 1])));
        out.push((sw, FlowEntry::output(hops[i + 1], vlan_id, hops[i - 1])));
    }
    out
}

/// Access-switch entries binding a UE to the ONU at the head of its path.
pub fn attachment_entries(asw: NodeId, ue: NodeId, onu: NodeId, vlan_id: VlanId) -> [(NodeId, FlowEntry); 2] {
    [
        (asw, FlowEntry::output(ue, vlan_id, onu)),
        (asw, FlowEntry::output(onu, vlan_id, ue)),
    ]
}

/// Entries on the aggregation segment (aggregation node onward).
fn aggregation_entries(topology: &Topology, hops: &[NodeId], vlan_id: VlanId) -> Vec<(NodeId, FlowEntry)> {
    path_entries(topology, hops, vlan_id)
        .into_iter()
        .filter(|(sw, _)| {
            matches!(
                topology.kind(*sw),
                NodeKind::AggregationL2Switch | NodeKind::AggregationSwitch
            )
        })
        .collect()
}

fn line_card_of(topology: &Topology, hops: &[NodeId]) -> Option<NodeId> {
    hops.iter()
        .copied()
        .find(|h| topology.kind(*h) == NodeKind::OltLineCard)
}

fn check_pair(topology: &Topology, onu: NodeId, lc: NodeId) -> Result<(), ControlError> {
    for (d, kind) in [(onu, NodeKind::Onu), (lc, NodeKind::OltLineCard)] {
        if !topology.contains(d) {
            return Err(ControlError::UnknownDevice(d));
        }
        if topology.kind(d) != kind {
            return Err(ControlError::NotPowerManaged(d));
        }
    }
    Ok(())
}

/// When a UE moves to its new access ONU.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReattachWhen {
    Now,
    /// Once the named device has finished powering on.
    AfterPowerOn(NodeId),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum OltAction {
    SetPower { device: NodeId, target: PowerTarget },
    Reattach { ue: NodeId, vlan_id: VlanId, onu: NodeId, when: ReattachWhen },
    /// Send in-band through the line card's tunnel.
    Notify(OltNotify),
    Warning(String),
}

/// The OLT management agent. It powers PON pairs up and down, hands UEs
/// over to the surviving antenna and tells the LiT controller.
#[derive(Clone, Debug)]
pub struct OltAgent {
    /// Current access ONU of each UE, by VLAN.
    attached: BTreeMap<VlanId, (NodeId, NodeId)>,
    next_episode: u32,
}

impl OltAgent {
    pub fn new(topology: &Topology) -> Self {
        let attached = topology
            .bearers()
            .iter()
            .filter_map(|b| {
                let head = topology.vlan(b.vlan_id)?.head()?;
                Some((b.vlan_id, (b.ue, head)))
            })
            .collect();
        OltAgent {
            attached,
            next_episode: 0,
        }
    }

    pub fn attachment(&self, vlan_id: VlanId) -> Option<(NodeId, NodeId)> {
        self.attached.get(&vlan_id).copied()
    }

    pub fn episodes_started(&self) -> u32 {
        self.next_episode
    }

    /// `power` reports the current state of any device.
    pub fn handle_sleep(
        &mut self,
        topology: &Topology,
        onu: NodeId,
        lc: NodeId,
        power: impl Fn(NodeId) -> PowerState,
        off_now: &BTreeSet<NodeId>,
    ) -> Result<Vec<OltAction>, ControlError> {
        check_pair(topology, onu, lc)?;
        let (po, pl) = (power(onu), power(lc));
        if po == PowerState::Off && pl == PowerState::Off {
            return Ok(vec![OltAction::Warning(format!(
                "sleep ignored: {} and {} are already off",
                topology.label(onu),
                topology.label(lc)
            ))]);
        }
        for (d, p) in [(onu, po), (lc, pl)] {
            if matches!(p, PowerState::TurningOn | PowerState::TurningOff) {
                return Err(DataplaneError::TransitionInProgress(d).into());
            }
        }
        let mut off: BTreeSet<NodeId> = off_now.clone();
        off.insert(onu);
        off.insert(lc);
        let mut actions = Vec::new();
        let mut vlans = Vec::new();
        for (&vlan_id, &(ue, at)) in &self.attached {
            if at != onu {
                continue;
            }
            vlans.push(vlan_id);
            let new = compute_reroute(topology, vlan_id, &off)?;
            let head = new.head().expect("reroute paths are non-empty");
            actions.push(OltAction::Reattach {
                ue,
                vlan_id,
                onu: head,
                when: ReattachWhen::Now,
            });
        }
        for a in &actions {
            if let OltAction::Reattach { vlan_id, ue, onu, .. } = a {
                self.attached.insert(*vlan_id, (*ue, *onu));
            }
        }
        for d in [onu, lc] {
            if power(d) == PowerState::On {
                actions.push(OltAction::SetPower {
                    device: d,
                    target: PowerTarget::Off,
                });
            }
        }
        actions.push(OltAction::Notify(self.notify(Direction::Sleep, onu, lc, vlans)));
        Ok(actions)
    }

    pub fn handle_wake(
        &mut self,
        topology: &Topology,
        onu: NodeId,
        lc: NodeId,
        power: impl Fn(NodeId) -> PowerState,
    ) -> Result<Vec<OltAction>, ControlError> {
        check_pair(topology, onu, lc)?;
        let (po, pl) = (power(onu), power(lc));
        if po == PowerState::On && pl == PowerState::On {
            return Ok(vec![OltAction::Warning(format!(
                "wake ignored: {} and {} are already on",
                topology.label(onu),
                topology.label(lc)
            ))]);
        }
        for (d, p) in [(onu, po), (lc, pl)] {
            if matches!(p, PowerState::TurningOn | PowerState::TurningOff) {
                return Err(DataplaneError::TransitionInProgress(d).into());
            }
        }
        let mut actions = Vec::new();
        for d in [onu, lc] {
            if power(d) == PowerState::Off {
                actions.push(OltAction::SetPower {
                    device: d,
                    target: PowerTarget::On,
                });
            }
        }
        let mut vlans = Vec::new();
        for b in topology.bearers() {
            let Some(home) = topology.vlan(b.vlan_id) else {
                continue;
            };
            if home.head() != Some(onu) {
                continue;
            }
            vlans.push(b.vlan_id);
            let current = self.attached.get(&b.vlan_id).map(|a| a.1);
            if current != Some(onu) {
                actions.push(OltAction::Reattach {
                    ue: b.ue,
                    vlan_id: b.vlan_id,
                    onu,
                    when: ReattachWhen::AfterPowerOn(onu),
                });
                self.attached.insert(b.vlan_id, (b.ue, onu));
            }
        }
        actions.push(OltAction::Notify(self.notify(Direction::Wake, onu, lc, vlans)));
        Ok(actions)
    }

    fn notify(&mut self, direction: Direction, onu: NodeId, lc: NodeId, vlans: Vec<VlanId>) -> OltNotify {
        let episode = self.next_episode;
        self.next_episode += 1;
        OltNotify {
            episode,
            direction,
            onu,
            lc,
            vlans,
        }
    }
}

/// What the LiT controller emits after processing a notification.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LitOutput {
    pub flow_mods: Vec<FlowMod>,
    pub trigger: Trigger,
}

/// Lightweight controller of the aggregation node. It patches the L2SW so
/// the affected VLAN tags enter and leave through the surviving line card,
/// then hands the rest of the reroute to the SDN controller.
#[derive(Clone, Debug)]
pub struct LitController {
    l2sw: NodeId,
    known_device_states: BTreeMap<NodeId, PowerState>,
    current_paths: BTreeMap<VlanId, Vec<NodeId>>,
    pending_reconfigs: BTreeSet<VlanId>,
    outstanding_acks: BTreeMap<u32, usize>,
    awaiting_sdn: BTreeMap<u32, Vec<VlanId>>,
}

impl LitController {
    pub fn new(topology: &Topology) -> Result<Self, ControlError> {
        let l2sw = topology
            .aggregation_node()
            .ok_or(ControlError::MissingRole(NodeKind::AggregationL2Switch))?;
        let current_paths = topology
            .vlans()
            .iter()
            .filter(|p| p.status == PathStatus::Active)
            .map(|p| (p.vlan_id, p.hops.clone()))
            .collect();
        let known_device_states = topology
            .nodes()
            .iter()
            .filter(|n| n.kind.is_power_managed())
            .map(|n| (n.id, PowerState::On))
            .collect();
        Ok(LitController {
            l2sw,
            known_device_states,
            current_paths,
            pending_reconfigs: BTreeSet::new(),
            outstanding_acks: BTreeMap::new(),
            awaiting_sdn: BTreeMap::new(),
        })
    }

    pub fn pending_reconfigs(&self) -> &BTreeSet<VlanId> {
        &self.pending_reconfigs
    }

    pub fn current_path(&self, vlan_id: VlanId) -> Option<&[NodeId]> {
        self.current_paths.get(&vlan_id).map(|v| v.as_slice())
    }

    pub fn known_state(&self, device: NodeId) -> Option<PowerState> {
        self.known_device_states.get(&device).copied()
    }

    fn off_set(&self) -> BTreeSet<NodeId> {
        self.known_device_states
            .iter()
            .filter(|(_, s)| **s != PowerState::On)
            .map(|(d, _)| *d)
            .collect()
    }

    pub fn handle_notify(&mut self, topology: &Topology, msg: &OltNotify) -> Result<LitOutput, ControlError> {
        for d in [msg.onu, msg.lc] {
            if !topology.contains(d) {
                return Err(ControlError::UnknownDevice(d));
            }
        }
        let (state, lc_state) = match msg.direction {
            Direction::Sleep => (PowerState::Off, PowerState::Off),
            Direction::Wake => (PowerState::On, PowerState::On),
        };
        self.known_device_states.insert(msg.onu, state);
        self.known_device_states.insert(msg.lc, lc_state);
        let off = self.off_set();

        let affected: Vec<VlanId> = self
            .current_paths
            .iter()
            .filter(|(v, path)| match msg.direction {
                Direction::Sleep => path.contains(&msg.lc),
                Direction::Wake => topology
                    .vlan(**v)
                    .is_some_and(|home| home.contains(msg.lc) && home.hops != **path),
            })
            .map(|(v, _)| *v)
            .collect();

        let mut flow_mods = Vec::new();
        for &v in &affected {
            let current = self.current_paths[&v].clone();
            let new = compute_reroute(topology, v, &off)?;
            let (Some(old_lc), Some(new_lc)) =
                (line_card_of(topology, &current), line_card_of(topology, &new.hops))
            else {
                continue;
            };
            let mut push = |op| {
                flow_mods.push(FlowMod {
                    episode: msg.episode,
                    origin: Origin::Lit,
                    switch: self.l2sw,
                    op,
                })
            };
            push(FlowModOp::Delete {
                matcher: FlowMatch {
                    in_port: old_lc,
                    vlan_id: v,
                },
                priority: crate::dataplane::DEFAULT_PRIORITY,
            });
            // Toward the UE: whatever fed the old line card now feeds the new one.
            if let Some(upstream) = next_after(&current, self.l2sw) {
                push(FlowModOp::Add {
                    entry: FlowEntry::output(upstream, v, new_lc),
                });
            }
            self.current_paths.insert(v, new.hops);
            self.pending_reconfigs.insert(v);
        }
        if !flow_mods.is_empty() {
            self.outstanding_acks.insert(msg.episode, flow_mods.len());
        }
        self.awaiting_sdn.insert(msg.episode, affected.clone());
        Ok(LitOutput {
            flow_mods,
            trigger: Trigger {
                episode: msg.episode,
                direction: msg.direction,
                off: off.into_iter().collect(),
                vlans: affected,
            },
        })
    }

    /// A switch confirmed one of this controller's FlowMods.
    pub fn handle_flow_mod_ack(&mut self, episode: u32) {
        if let Some(n) = self.outstanding_acks.get_mut(&episode) {
            *n -= 1;
            if *n == 0 {
                self.outstanding_acks.remove(&episode);
            }
        }
        self.settle();
    }

    pub fn handle_ack(&mut self, ack: &Ack) {
        for (v, hops) in &ack.paths {
            self.current_paths.insert(*v, hops.clone());
        }
        self.awaiting_sdn.remove(&ack.episode);
        self.settle();
    }

    fn settle(&mut self) {
        if self.outstanding_acks.is_empty() && self.awaiting_sdn.is_empty() {
            self.pending_reconfigs.clear();
        }
    }
}

fn next_after(hops: &[NodeId], node: NodeId) -> Option<NodeId> {
    let i = hops.iter().position(|&h| h == node)?;
    hops.get(i + 1).copied()
}

#[derive(Clone, Debug)]
struct SdnEpisode {
    outstanding: usize,
    paths: Vec<(VlanId, Vec<NodeId>)>,
}

/// Controller of the aggregation network. It computes the new VLAN paths
/// and installs them from the NF server back toward the aggregation node.
#[derive(Clone, Debug)]
pub struct SdnController {
    current_paths: BTreeMap<VlanId, Vec<NodeId>>,
    history: Vec<VlanPath>,
    known_off: BTreeSet<NodeId>,
    episodes: BTreeMap<u32, SdnEpisode>,
}

impl SdnController {
    pub fn new(topology: &Topology) -> Self {
        SdnController {
            current_paths: topology
                .vlans()
                .iter()
                .filter(|p| p.status == PathStatus::Active)
                .map(|p| (p.vlan_id, p.hops.clone()))
                .collect(),
            history: Vec::new(),
            known_off: BTreeSet::new(),
            episodes: BTreeMap::new(),
        }
    }

    pub fn current_path(&self, vlan_id: VlanId) -> Option<&[NodeId]> {
        self.current_paths.get(&vlan_id).map(|v| v.as_slice())
    }

    /// Paths this controller has replaced, oldest first, all `Superseded`.
    pub fn history(&self) -> &[VlanPath] {
        &self.history
    }

    pub fn pending_episodes(&self) -> usize {
        self.episodes.len()
    }

    /// Returns the FlowMods in install order. An empty result means the
    /// paths were already right; call [`SdnController::take_ack`] to get the
    /// acknowledgement for the LiT controller.
    pub fn handle_trigger(&mut self, topology: &Topology, msg: &Trigger) -> Result<Vec<FlowMod>, ControlError> {
        self.known_off = msg.off.iter().copied().collect();
        let mut mods = Vec::new();
        let mut paths = Vec::new();
        for &v in &msg.vlans {
            let new = compute_reroute(topology, v, &self.known_off)?;
            let old = self
                .current_paths
                .get(&v)
                .cloned()
                .ok_or(ControlError::UnknownVlan(v))?;
            paths.push((v, new.hops.clone()));
            if new.hops == old {
                continue;
            }
            mods.extend(reroute_mods(topology, msg.episode, v, &old, &new.hops));
            self.history.push(VlanPath {
                vlan_id: v,
                name: topology.path_string(&old),
                hops: old,
                status: PathStatus::Superseded,
            });
            self.current_paths.insert(v, new.hops);
        }
        self.episodes.insert(
            msg.episode,
            SdnEpisode {
                outstanding: mods.len(),
                paths,
            },
        );
        Ok(mods)
    }

    /// A switch confirmed a FlowMod. Returns the Ack once all are in.
    pub fn handle_flow_mod_ack(&mut self, episode: u32) -> Option<Ack> {
        let e = self.episodes.get_mut(&episode)?;
        e.outstanding = e.outstanding.saturating_sub(1);
        self.take_ack(episode)
    }

    /// The Ack for an episode with no outstanding FlowMods.
    pub fn take_ack(&mut self, episode: u32) -> Option<Ack> {
        if self.episodes.get(&episode)?.outstanding > 0 {
            return None;
        }
        let e = self.episodes.remove(&episode)?;
        Some(Ack {
            episode,
            paths: e.paths,
        })
    }
}

/// Installs toward the server first so the new path is complete before the
/// aggregation node starts using it; stale entries go last. The old line
/// card's entry at the aggregation node was already removed by the LiT
/// controller.
fn reroute_mods(topology: &Topology, episode: u32, v: VlanId, old: &[NodeId], new: &[NodeId]) -> Vec<FlowMod> {
    let want = aggregation_entries(topology, new, v);
    let have = aggregation_entries(topology, old, v);
    let mut mods = Vec::new();
    // Hop order is access -> server; pairs are (forward, reverse). Walk
    // backwards so each switch gets its reverse entry before its forward one.
    for (sw, e) in want.iter().rev() {
        if !have.contains(&(*sw, *e)) {
            mods.push(FlowMod {
                episode,
                origin: Origin::Sdn,
                switch: *sw,
                op: FlowModOp::Add { entry: *e },
            });
        }
    }
    let old_lc = line_card_of(topology, old);
    for (sw, e) in &have {
        let replaced = want
            .iter()
            .any(|(s, w)| s == sw && w.matcher == e.matcher && w.priority == e.priority);
        let lit_removed = topology.kind(*sw) == NodeKind::AggregationL2Switch
            && Some(e.matcher.in_port) == old_lc;
        if replaced || lit_removed {
            continue;
        }
        mods.push(FlowMod {
            episode,
            origin: Origin::Sdn,
            switch: *sw,
            op: FlowModOp::Delete {
                matcher: e.matcher,
                priority: e.priority,
            },
        });
    }
    mods
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{build_reference_topology, path_links};

    fn ids(t: &Topology, labels: &[&str]) -> Vec<NodeId> {
        labels.iter().map(|l| t.find(l).unwrap()).collect()
    }

    fn off(t: &Topology, labels: &[&str]) -> BTreeSet<NodeId> {
        ids(t, labels).into_iter().collect()
    }

    #[test]
    fn reroute_around_sleeping_pair() {
        let t = build_reference_topology();
        let p = compute_reroute(&t, VlanId(2), &off(&t, &["ONU2", "LC2"])).unwrap();
        assert_eq!(t.path_string(&p.hops), "ONU1-LC1-L2SW-s1-s3-NF2");
        assert_eq!(path_links(&t, &p).unwrap().len(), 5);
    }

    #[test]
    fn reroute_fixed_point() {
        let t = build_reference_topology();
        let p = compute_reroute(&t, VlanId(2), &BTreeSet::new()).unwrap();
        assert_eq!(&p, t.vlan(VlanId(2)).unwrap());
    }

    #[test]
    fn reroute_without_aggregation_fails() {
        let t = build_reference_topology();
        assert_eq!(
            compute_reroute(&t, VlanId(2), &off(&t, &["s1", "s2", "s3"])),
            Err(ControlError::NoPathAvailable(VlanId(2)))
        );
    }

    #[test]
    fn lit_remaps_l2sw_and_triggers() {
        let t = build_reference_topology();
        let [onu2, lc1, lc2, l2sw, s2] = ids(&t, &["ONU2", "LC1", "LC2", "L2SW", "s2"])[..] else {
            unreachable!()
        };
        let mut lit = LitController::new(&t).unwrap();
        let out = lit
            .handle_notify(
                &t,
                &OltNotify {
                    episode: 0,
                    direction: Direction::Sleep,
                    onu: onu2,
                    lc: lc2,
                    vlans: vec![VlanId(2)],
                },
            )
            .unwrap();
        let ops: Vec<_> = out.flow_mods.iter().map(|m| (m.switch, m.op)).collect();
        assert_eq!(
            ops,
            vec![
                (
                    l2sw,
                    FlowModOp::Delete {
                        matcher: FlowMatch {
                            in_port: lc2,
                            vlan_id: VlanId(2)
                        },
                        priority: 100
                    }
                ),
                (
                    l2sw,
                    FlowModOp::Add {
                        entry: FlowEntry::output(s2, VlanId(2), lc1)
                    }
                ),
            ]
        );
        assert_eq!(out.trigger.vlans, vec![VlanId(2)]);
        assert_eq!(out.trigger.off, vec![onu2, lc2]);
        assert!(lit.pending_reconfigs().contains(&VlanId(2)));
    }

    #[test]
    fn lit_without_vlan_sends_bare_trigger() {
        let mut t = build_reference_topology();
        let onu3 = t.add_node("ONU3", NodeKind::Onu);
        let lc3 = t.add_node("LC3", NodeKind::OltLineCard);
        let mut lit = LitController::new(&t).unwrap();
        let out = lit
            .handle_notify(
                &t,
                &OltNotify {
                    episode: 4,
                    direction: Direction::Sleep,
                    onu: onu3,
                    lc: lc3,
                    vlans: vec![],
                },
            )
            .unwrap();
        assert!(out.flow_mods.is_empty());
        assert_eq!(out.trigger.episode, 4);
        assert!(out.trigger.vlans.is_empty());
    }

    #[test]
    fn lit_rejects_unknown_device() {
        let t = build_reference_topology();
        let mut lit = LitController::new(&t).unwrap();
        let err = lit
            .handle_notify(
                &t,
                &OltNotify {
                    episode: 0,
                    direction: Direction::Sleep,
                    onu: NodeId(99),
                    lc: NodeId(6),
                    vlans: vec![],
                },
            )
            .unwrap_err();
        assert_eq!(err, ControlError::UnknownDevice(NodeId(99)));
    }

    #[test]
    fn sdn_installs_server_side_first() {
        let t = build_reference_topology();
        let mut sdn = SdnController::new(&t);
        let trig = Trigger {
            episode: 0,
            direction: Direction::Sleep,
            off: ids(&t, &["ONU2", "LC2"]),
            vlans: vec![VlanId(2)],
        };
        let mods = sdn.handle_trigger(&t, &trig).unwrap();
        let installs: Vec<_> = mods
            .iter()
            .filter_map(|m| match m.op {
                FlowModOp::Add { entry } => Some(format!(
                    "{}:{}>{}",
                    t.label(m.switch),
                    t.label(entry.matcher.in_port),
                    match entry.action {
                        crate::dataplane::FlowAction::Output(p) => t.label(p),
                        _ => "drop",
                    }
                )),
                _ => None,
            })
            .collect();
        assert_eq!(
            installs,
            [
                "s3:NF2>s1",
                "s3:s1>NF2",
                "s1:s3>L2SW",
                "s1:L2SW>s3",
                "L2SW:s1>LC1",
                "L2SW:LC1>s1"
            ]
        );
        let deletes = mods.len() - installs.len();
        // s2 both ways, s3 from s2 and toward s2 (replaced? no: different
        // match), L2SW from s2. The LC2 forward entry is the LiT's job.
        assert_eq!(deletes, 4);
        assert_eq!(sdn.history().len(), 1);
        assert_eq!(sdn.history()[0].status, PathStatus::Superseded);
        for _ in 0..mods.len() - 1 {
            assert!(sdn.handle_flow_mod_ack(0).is_none());
        }
        let ack = sdn.handle_flow_mod_ack(0).unwrap();
        assert_eq!(t.path_string(&ack.paths[0].1), "ONU1-LC1-L2SW-s1-s3-NF2");
    }

    #[test]
    fn sdn_fixed_point_emits_nothing() {
        let t = build_reference_topology();
        let mut sdn = SdnController::new(&t);
        let trig = Trigger {
            episode: 3,
            direction: Direction::Wake,
            off: vec![],
            vlans: vec![VlanId(2)],
        };
        assert!(sdn.handle_trigger(&t, &trig).unwrap().is_empty());
        assert!(sdn.take_ack(3).is_some());
    }

    #[test]
    fn olt_sleep_then_repeat_warns() {
        let t = build_reference_topology();
        let [onu1, onu2, lc2, ue2] = ids(&t, &["ONU1", "ONU2", "LC2", "UE2"])[..] else {
            unreachable!()
        };
        let mut olt = OltAgent::new(&t);
        let acts = olt
            .handle_sleep(&t, onu2, lc2, |_| PowerState::On, &BTreeSet::new())
            .unwrap();
        assert_eq!(
            acts[0],
            OltAction::Reattach {
                ue: ue2,
                vlan_id: VlanId(2),
                onu: onu1,
                when: ReattachWhen::Now
            }
        );
        assert!(matches!(acts.last(), Some(OltAction::Notify(n)) if n.vlans == [VlanId(2)]));
        let again = olt
            .handle_sleep(&t, onu2, lc2, |_| PowerState::Off, &BTreeSet::new())
            .unwrap();
        assert!(matches!(&again[..], [OltAction::Warning(_)]));
        let busy = olt.handle_sleep(&t, onu2, lc2, |_| PowerState::TurningOff, &BTreeSet::new());
        assert!(matches!(
            busy,
            Err(ControlError::Dataplane(DataplaneError::TransitionInProgress(_)))
        ));
    }
}
