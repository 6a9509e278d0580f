//! Packet forwarding primitives: flow tables, drop-tail egress queues,
//! table-miss buffering and the device power state machine.
//!
//! Everything here is a plain state container driven by the event engine;
//! nothing schedules itself.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::time::{serialization_time, SimTime};
use crate::topology::{Link, LinkId, NodeId, VlanId};

/// Default flow-entry install latency.
pub const DEFAULT_INSTALL_LATENCY: SimTime = SimTime::from_micros(50);
/// Default ONU/LC sleep and wake transition time.
pub const DEFAULT_TRANSITION_TIME: SimTime = SimTime::from_millis(1);
/// Modeled Ethernet + IP + UDP + tunnel header bytes added to each payload.
pub const DEFAULT_FRAME_OVERHEAD: u32 = 54;
/// On-wire size of probe requests and replies.
pub const DEFAULT_PROBE_SIZE: u32 = 64;
/// On-wire size of in-band control packets.
pub const CONTROL_PACKET_SIZE: u32 = 64;
/// Priority given to controller-installed entries.
pub const DEFAULT_PRIORITY: u16 = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FlowId(pub u32);

impl fmt::Display for FlowId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PacketKind {
    ProbeRequest,
    ProbeReply,
    Cbr,
    Control,
}

/// A frame in flight. `size` is the on-wire size including overhead.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Packet {
    pub flow_id: FlowId,
    pub seq: u64,
    pub vlan_id: VlanId,
    pub size: u32,
    pub created_at: SimTime,
    pub kind: PacketKind,
    pub src: NodeId,
    pub dst: NodeId,
    /// For probe replies, the creation time of the request being answered.
    pub echo_of: Option<SimTime>,
}

/// Ports are identified by the neighbour on the far side of the link.
pub type Port = NodeId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type", content = "port")]
pub enum FlowAction {
    Output(Port),
    Drop,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FlowMatch {
    pub in_port: Port,
    pub vlan_id: VlanId,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FlowEntry {
    #[serde(rename = "match")]
    pub matcher: FlowMatch,
    pub priority: u16,
    pub action: FlowAction,
}

impl FlowEntry {
    pub fn output(in_port: Port, vlan_id: VlanId, out: Port) -> Self {
        FlowEntry {
            matcher: FlowMatch { in_port, vlan_id },
            priority: DEFAULT_PRIORITY,
            action: FlowAction::Output(out),
        }
    }
}

/// A table change as carried by a FlowMod.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "op")]
pub enum FlowModOp {
    /// Adds the entry, replacing any with the same match and priority.
    Add { entry: FlowEntry },
    /// Strict delete of the entry with this match and priority.
    Delete { matcher: FlowMatch, priority: u16 },
}

impl FlowModOp {
    pub fn matcher(&self) -> FlowMatch {
        match self {
            FlowModOp::Add { entry } => entry.matcher,
            FlowModOp::Delete { matcher, .. } => *matcher,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    /// No flow entry matched and the packet could not be buffered.
    NoMatch,
    /// Arrived at, or was queued inside, a device that is not On.
    DeviceOff,
    /// Egress queue full.
    BufferFull,
    /// Table-miss buffer full.
    MissBufferFull,
    /// Held in the table-miss buffer longer than its timeout.
    MissExpired,
    /// Matched an explicit drop action.
    ActionDrop,
    /// Output port has no link or loops back out of the ingress port.
    BadOutput,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ForwardResult {
    Output(Port),
    Drop(DropReason),
}

/// Match-action table keyed by (in_port, vlan, priority).
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FlowTable {
    entries: BTreeMap<(Port, VlanId, u16), FlowAction>,
}

impl FlowTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts `entry`, returning the action it replaced.
    pub fn insert(&mut self, entry: FlowEntry) -> Option<FlowAction> {
        let m = entry.matcher;
        self.entries
            .insert((m.in_port, m.vlan_id, entry.priority), entry.action)
    }

    pub fn remove(&mut self, matcher: FlowMatch, priority: u16) -> Option<FlowAction> {
        self.entries
            .remove(&(matcher.in_port, matcher.vlan_id, priority))
    }

    pub fn apply(&mut self, op: FlowModOp) {
        match op {
            FlowModOp::Add { entry } => {
                self.insert(entry);
            }
            FlowModOp::Delete { matcher, priority } => {
                self.remove(matcher, priority);
            }
        }
    }

    /// Highest-priority action for the match.
    pub fn lookup(&self, in_port: Port, vlan_id: VlanId) -> Option<FlowAction> {
        self.entries
            .range((in_port, vlan_id, 0)..=(in_port, vlan_id, u16::MAX))
            .next_back()
            .map(|(_, a)| *a)
    }

    pub fn forward(&self, packet: &Packet, in_port: Port) -> ForwardResult {
        match self.lookup(in_port, packet.vlan_id) {
            Some(FlowAction::Output(p)) => ForwardResult::Output(p),
            Some(FlowAction::Drop) => ForwardResult::Drop(DropReason::ActionDrop),
            None => ForwardResult::Drop(DropReason::NoMatch),
        }
    }

    pub fn entries(&self) -> impl Iterator<Item = FlowEntry> + '_ {
        self.entries.iter().map(|(&(in_port, vlan_id, priority), &action)| FlowEntry {
            matcher: FlowMatch { in_port, vlan_id },
            priority,
            action,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerState {
    On,
    Off,
    TurningOn,
    TurningOff,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerTarget {
    On,
    Off,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DataplaneError {
    #[error("device {0} is not powered on")]
    DeviceOff(NodeId),
    #[error("device {0} is already changing power state")]
    TransitionInProgress(NodeId),
    #[error("device {0} has no flow table")]
    NotASwitch(NodeId),
}

/// Sleep/wake state machine of one device.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PowerMachine {
    device: NodeId,
    state: PowerState,
    transition_time: SimTime,
    completes_at: SimTime,
}

impl PowerMachine {
    pub fn new(device: NodeId, transition_time: SimTime) -> Self {
        PowerMachine {
            device,
            state: PowerState::On,
            transition_time,
            completes_at: SimTime::ZERO,
        }
    }

    pub fn state(&self) -> PowerState {
        self.state
    }

    pub fn is_on(&self) -> bool {
        self.state == PowerState::On
    }

    pub fn in_transition(&self) -> bool {
        matches!(self.state, PowerState::TurningOn | PowerState::TurningOff)
    }

    /// Zero iff the machine is in a stable state.
    pub fn transition_remaining(&self, now: SimTime) -> SimTime {
        if self.in_transition() {
            self.completes_at.saturating_sub(now)
        } else {
            SimTime::ZERO
        }
    }

    /// Starts a transition and returns when it completes. Requesting the
    /// current stable state completes immediately. With a zero transition
    /// time the target state is reached at once.
    pub fn set_power(&mut self, target: PowerTarget, at: SimTime) -> Result<SimTime, DataplaneError> {
        if self.in_transition() {
            return Err(DataplaneError::TransitionInProgress(self.device));
        }
        let (stable, moving) = match target {
            PowerTarget::On => (PowerState::On, PowerState::TurningOn),
            PowerTarget::Off => (PowerState::Off, PowerState::TurningOff),
        };
        if self.state == stable {
            return Ok(at);
        }
        if self.transition_time == SimTime::ZERO {
            self.state = stable;
            return Ok(at);
        }
        self.state = moving;
        self.completes_at = at + self.transition_time;
        Ok(self.completes_at)
    }

    /// Finishes the pending transition; returns the new stable state.
    pub fn complete(&mut self) -> PowerState {
        self.state = match self.state {
            PowerState::TurningOn => PowerState::On,
            PowerState::TurningOff => PowerState::Off,
            s => s,
        };
        self.state
    }
}

/// Schedules a flow install on a switch. Returns the instant the entry
/// takes effect; the caller applies the change at that instant.
pub fn install_flow(
    power: PowerState,
    switch: NodeId,
    at: SimTime,
    latency: SimTime,
) -> Result<SimTime, DataplaneError> {
    if power != PowerState::On {
        return Err(DataplaneError::DeviceOff(switch));
    }
    Ok(at + latency)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EnqueueResult {
    /// `departure` is when the last bit leaves; `arrival` adds propagation.
    Accepted { departure: SimTime, arrival: SimTime },
    Dropped(DropReason),
}

/// Drop-tail FIFO for one direction of a link. A frame occupies the buffer
/// until its last bit has been serialized.
#[derive(Clone, Debug)]
pub struct EgressQueue<T> {
    pub link: LinkId,
    pub from: NodeId,
    pub to: NodeId,
    capacity_bps: u64,
    propagation: SimTime,
    buffer_limit: u64,
    busy_until: SimTime,
    occupancy: u64,
    fifo: VecDeque<(T, SimTime, u32)>,
}

impl<T: Copy> EgressQueue<T> {
    pub fn new(link_id: LinkId, link: &Link, from: NodeId) -> Self {
        let to = link.other(from).expect("queue endpoint must be on the link");
        EgressQueue {
            link: link_id,
            from,
            to,
            capacity_bps: link.capacity_bps,
            propagation: link.propagation,
            buffer_limit: link.buffer_limit,
            busy_until: SimTime::ZERO,
            occupancy: 0,
            fifo: VecDeque::new(),
        }
    }

    fn drain(&mut self, now: SimTime) {
        while let Some(&(_, dep, size)) = self.fifo.front() {
            if dep > now {
                break;
            }
            self.occupancy -= size as u64;
            self.fifo.pop_front();
        }
    }

    /// Bytes not yet fully serialized at `now`.
    pub fn occupancy(&mut self, now: SimTime) -> u64 {
        self.drain(now);
        self.occupancy
    }

    pub fn busy_until(&self) -> SimTime {
        self.busy_until
    }

    pub fn buffer_limit(&self) -> u64 {
        self.buffer_limit
    }

    pub fn enqueue(&mut self, item: T, size: u32, at: SimTime) -> EnqueueResult {
        self.drain(at);
        if self.occupancy + size as u64 > self.buffer_limit {
            return EnqueueResult::Dropped(DropReason::BufferFull);
        }
        let start = at.max(self.busy_until);
        let departure = start + serialization_time(size as u64, self.capacity_bps);
        self.busy_until = departure;
        self.occupancy += size as u64;
        assert!(self.occupancy <= self.buffer_limit);
        self.fifo.push_back((item, departure, size));
        EnqueueResult::Accepted {
            departure,
            arrival: departure + self.propagation,
        }
    }

    /// Discards everything not yet serialized, in FIFO order. Frames already
    /// on the wire are unaffected.
    pub fn flush(&mut self, now: SimTime) -> Vec<T> {
        self.drain(now);
        let out = self.fifo.drain(..).map(|(t, _, _)| t).collect();
        self.occupancy = 0;
        self.busy_until = self.busy_until.min(now);
        out
    }
}

/// Frames parked on a table miss until a matching entry is installed.
#[derive(Clone, Debug)]
pub struct MissBuffer<T> {
    capacity: u64,
    timeout: SimTime,
    used: u64,
    held: VecDeque<Held<T>>,
}

#[derive(Clone, Debug)]
struct Held<T> {
    item: T,
    matcher: FlowMatch,
    size: u32,
    expires: SimTime,
}

impl<T: Copy> MissBuffer<T> {
    pub fn new(capacity: u64, timeout: SimTime) -> Self {
        MissBuffer {
            capacity,
            timeout,
            used: 0,
            held: VecDeque::new(),
        }
    }

    pub fn used(&self) -> u64 {
        self.used
    }

    pub fn len(&self) -> usize {
        self.held.len()
    }

    pub fn is_empty(&self) -> bool {
        self.held.is_empty()
    }

    /// Removes and returns frames whose hold time has run out.
    pub fn expire(&mut self, now: SimTime) -> Vec<T> {
        let mut out = Vec::new();
        while let Some(h) = self.held.front() {
            if h.expires > now {
                break;
            }
            let h = self.held.pop_front().unwrap();
            self.used -= h.size as u64;
            out.push(h.item);
        }
        out
    }

    /// Parks a frame; gives it back if there is no room.
    pub fn hold(&mut self, item: T, matcher: FlowMatch, size: u32, now: SimTime) -> Result<(), T> {
        if self.used + size as u64 > self.capacity {
            return Err(item);
        }
        self.used += size as u64;
        self.held.push_back(Held {
            item,
            matcher,
            size,
            expires: now + self.timeout,
        });
        Ok(())
    }

    /// Removes, in arrival order, every frame the table now matches.
    pub fn release(&mut self, table: &FlowTable) -> Vec<(T, FlowMatch, FlowAction)> {
        let mut out = Vec::new();
        let mut keep = VecDeque::with_capacity(self.held.len());
        for h in self.held.drain(..) {
            match table.lookup(h.matcher.in_port, h.matcher.vlan_id) {
                Some(a) => {
                    self.used -= h.size as u64;
                    out.push((h.item, h.matcher, a));
                }
                None => keep.push_back(h),
            }
        }
        self.held = keep;
        out
    }
}
