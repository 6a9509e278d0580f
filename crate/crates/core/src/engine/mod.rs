//! Deterministic discrete-event engine tying the data plane, control plane
//! and traffic generators together.

mod config;
mod log;
mod scheduler;

pub use config::{LatencyParams, LogDetail, PowerCommand, RandomVar, RunConfig};
pub use log::{EventLog, FlowKind, LogRecord};
pub use scheduler::{Scheduler, TimeInPast};

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::controlplane::{
    attachment_entries, path_entries, Ack, ControlError, ControlKind, Direction, FlowMod,
    LitController, OltAction, OltAgent, OltNotify, Origin, ReattachWhen, SdnController, Trigger,
};
use crate::dataplane::{
    install_flow, DropReason, EgressQueue, EnqueueResult, FlowAction, FlowId, FlowMatch,
    FlowTable, ForwardResult, MissBuffer, Packet, PacketKind, PowerMachine, PowerState,
    CONTROL_PACKET_SIZE,
};
use crate::time::SimTime;
use crate::topology::{validate, LinkKind, NodeId, NodeKind, PathStatus, Topology, VlanId};
use crate::traffic::{FlowSpec, TrafficError};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    TimeInPast(#[from] TimeInPast),
    #[error("invalid run configuration: {0}")]
    InvalidConfig(String),
    #[error("flow {flow}: {source}")]
    Traffic {
        flow: usize,
        #[source]
        source: TrafficError,
    },
    #[error(transparent)]
    Control(#[from] ControlError),
}

/// Per-flow totals. Probe flows count requests and replies together.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FlowStats {
    pub created: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub in_flight: u64,
    pub delay_sum_ns: u64,
}

impl FlowStats {
    pub fn conserved(&self) -> bool {
        self.created == self.delivered + self.dropped + self.in_flight
    }
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub log: EventLog,
    /// Indexed by flow id; the last entry is the in-band control flow.
    pub flows: Vec<FlowStats>,
    pub events: u64,
}

impl RunOutput {
    pub fn conservation_ok(&self) -> bool {
        self.flows.iter().all(FlowStats::conserved)
    }
}

type PktRef = u32;

enum Event {
    Emit { flow: u32, k: u64 },
    Arrive { pkt: PktRef, from: NodeId, to: NodeId },
    Command { idx: usize },
    PowerDone { device: NodeId },
    Reattach { ue: NodeId, vlan: VlanId, onu: NodeId },
    LitDone { episode: u32 },
    TriggerArrive { trigger: Box<Trigger> },
    SdnDone { trigger: Box<Trigger> },
    FlowModEffective { fm: FlowMod },
    AckArrive { ack: Box<Ack> },
}

struct Slot {
    pkt: Packet,
    alive: bool,
}

#[derive(Default)]
struct Device {
    power: Option<PowerMachine>,
    table: Option<FlowTable>,
    miss: Option<MissBuffer<PktRef>>,
}

impl Device {
    fn state(&self) -> PowerState {
        self.power.as_ref().map_or(PowerState::On, |p| p.state())
    }
}

/// One simulation run in progress.
pub struct Simulation {
    cfg: RunConfig,
    sched: Scheduler<Event>,
    rng: ChaCha8Rng,
    slab: Vec<Slot>,
    free: Vec<PktRef>,
    devices: Vec<Device>,
    queues: Vec<EgressQueue<PktRef>>,
    /// (neighbour, queue index) per node.
    ports: Vec<Vec<(NodeId, usize)>>,
    /// Queues a device owns and loses when it powers off.
    owned_queues: Vec<Vec<usize>>,
    to_lit: Vec<Option<NodeId>>,
    lit_node: NodeId,
    sdn_node: NodeId,
    tap: NodeId,
    olt: OltAgent,
    lit: LitController,
    sdn: SdnController,
    lit_busy_until: SimTime,
    sdn_busy_until: SimTime,
    notifies: Vec<OltNotify>,
    ue_switch: BTreeMap<NodeId, NodeId>,
    attached: BTreeMap<VlanId, NodeId>,
    stats: Vec<FlowStats>,
    last_control_capture: Option<SimTime>,
    log: Vec<LogRecord>,
}

impl Simulation {
    pub fn new(cfg: RunConfig) -> Result<Self, EngineError> {
        if cfg.t_end == SimTime::ZERO {
            return Err(EngineError::InvalidConfig("t_end must be positive".into()));
        }
        let report = validate(&cfg.topology);
        if !report.is_valid() {
            return Err(EngineError::InvalidConfig(report.to_string().trim_end().to_string()));
        }
        let topo = &cfg.topology;
        for (i, f) in cfg.flows.iter().enumerate() {
            f.validate(topo)
                .map_err(|source| EngineError::Traffic { flow: i, source })?;
        }
        for c in &cfg.commands {
            for d in [c.onu, c.lc] {
                if !topo.contains(d) {
                    return Err(ControlError::UnknownDevice(d).into());
                }
            }
        }
        if !cfg.latency.d_lit.is_valid()
            || !cfg.latency.d_sdn.is_valid()
            || !cfg.latency.d_link.is_valid()
        {
            return Err(EngineError::InvalidConfig("invalid delay distribution".into()));
        }
        let lit_node = topo.lit_controller().expect("validated");
        let sdn_node = topo.sdn_controller().expect("validated");
        let tap = match cfg.tap {
            Some(t) if topo.contains(t) => t,
            Some(t) => return Err(ControlError::UnknownDevice(t).into()),
            None => topo
                .aggregation_node()
                .ok_or_else(|| EngineError::InvalidConfig("no aggregation node to tap".into()))?,
        };

        let n = topo.nodes().len();
        let mut devices: Vec<Device> = (0..n).map(|_| Device::default()).collect();
        for node in topo.nodes() {
            let d = &mut devices[node.id.index()];
            if node.kind.is_power_managed() {
                d.power = Some(PowerMachine::new(node.id, cfg.latency.transition_time));
            }
            if node.kind.is_switch() {
                d.table = Some(FlowTable::new());
                d.miss = Some(MissBuffer::new(cfg.miss_buffer_bytes, cfg.miss_timeout));
            }
        }

        let mut queues = Vec::new();
        let mut ports = vec![Vec::new(); n];
        let mut owned_queues = vec![Vec::new(); n];
        for (i, link) in topo.links().iter().enumerate() {
            for from in [link.a, link.b] {
                let qi = queues.len();
                let to = link.other(from).unwrap();
                queues.push(EgressQueue::new(crate::topology::LinkId(i as u32), link, from));
                ports[from.index()].push((to, qi));
                if link.kind != LinkKind::Tunnel {
                    owned_queues[from.index()].push(qi);
                }
            }
        }

        // Control packets are source-routed along the shortest path to the
        // LiT controller.
        let mut to_lit = vec![None; n];
        let mut seen = vec![false; n];
        seen[lit_node.index()] = true;
        let mut bfs = VecDeque::from([lit_node]);
        while let Some(u) = bfs.pop_front() {
            for (v, _) in topo.neighbors(u) {
                if !seen[v.index()] {
                    seen[v.index()] = true;
                    to_lit[v.index()] = Some(u);
                    bfs.push_back(v);
                }
            }
        }

        let mut ue_switch = BTreeMap::new();
        let mut attached = BTreeMap::new();
        for p in topo.vlans().iter().filter(|p| p.status == PathStatus::Active) {
            for (sw, e) in path_entries(topo, &p.hops, p.vlan_id) {
                devices[sw.index()].table.as_mut().unwrap().insert(e);
            }
        }
        for b in topo.bearers() {
            let Some(head) = topo.vlan(b.vlan_id).and_then(|p| p.head()) else {
                continue;
            };
            attached.insert(b.vlan_id, head);
            let asw = topo.neighbors(b.ue).map(|(v, _)| v).find(|&v| {
                topo.kind(v) == NodeKind::AccessSwitch && topo.link_between(v, head).is_some()
            });
            if let Some(asw) = asw {
                ue_switch.insert(b.ue, asw);
                for (sw, e) in attachment_entries(asw, b.ue, head, b.vlan_id) {
                    devices[sw.index()].table.as_mut().unwrap().insert(e);
                }
            }
        }

        let stats = vec![FlowStats::default(); cfg.flows.len() + 1];
        Ok(Simulation {
            sched: Scheduler::new(),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            slab: Vec::new(),
            free: Vec::new(),
            devices,
            queues,
            ports,
            owned_queues,
            to_lit,
            lit_node,
            sdn_node,
            tap,
            olt: OltAgent::new(topo),
            lit: LitController::new(topo)?,
            sdn: SdnController::new(topo),
            lit_busy_until: SimTime::ZERO,
            sdn_busy_until: SimTime::ZERO,
            notifies: Vec::new(),
            ue_switch,
            attached,
            stats,
            last_control_capture: None,
            log: Vec::new(),
            cfg,
        }
        .started())
    }

    fn started(mut self) -> Self {
        self.log.push(LogRecord::RunStart {
            t: SimTime::ZERO,
            seed: self.cfg.seed,
            t_end: self.cfg.t_end,
        });
        // Commands first so they precede same-instant packet emissions.
        for idx in 0..self.cfg.commands.len() {
            let at = self.cfg.commands[idx].at;
            if at <= self.cfg.t_end {
                self.at(at, Event::Command { idx });
            }
        }
        for flow in 0..self.cfg.flows.len() {
            let t0 = self.cfg.flows[flow].emit_time(SimTime::ZERO, 0);
            if t0 < self.cfg.t_end {
                self.at(t0, Event::Emit {
                    flow: flow as u32,
                    k: 0,
                });
            }
        }
        self
    }

    pub fn now(&self) -> SimTime {
        self.sched.now()
    }

    pub fn topology(&self) -> &Topology {
        &self.cfg.topology
    }

    pub fn flow_table(&self, node: NodeId) -> Option<&FlowTable> {
        self.devices.get(node.index())?.table.as_ref()
    }

    pub fn power_state(&self, node: NodeId) -> PowerState {
        self.devices[node.index()].state()
    }

    pub fn lit(&self) -> &LitController {
        &self.lit
    }

    pub fn sdn(&self) -> &SdnController {
        &self.sdn
    }

    fn at(&mut self, t: SimTime, ev: Event) {
        self.sched
            .schedule(t, ev)
            .expect("the engine only schedules at or after the current time");
    }

    fn record(&mut self, detail: LogDetail, rec: impl FnOnce() -> LogRecord) {
        if self.cfg.log_detail >= detail {
            self.log.push(rec());
        }
    }

    /// Runs every event up to and including `t` (capped at `t_end`).
    pub fn run_until(&mut self, t: SimTime) {
        let limit = t.min(self.cfg.t_end);
        while let Some(next) = self.sched.peek_time() {
            if next > limit {
                break;
            }
            let (_, ev) = self.sched.pop().unwrap();
            self.dispatch(ev);
        }
        self.sched.advance_to(limit);
    }

    /// Runs to `t_end` and closes the log with per-flow totals.
    pub fn finish(mut self) -> RunOutput {
        self.run_until(self.cfg.t_end);
        let now = self.now();
        for sw in 0..self.devices.len() {
            self.expire_held(NodeId(sw as u32));
        }
        let mut in_flight = vec![0u64; self.stats.len()];
        for s in self.slab.iter().filter(|s| s.alive) {
            in_flight[s.pkt.flow_id.0 as usize] += 1;
        }
        for (i, n) in in_flight.into_iter().enumerate() {
            self.stats[i].in_flight = n;
        }
        let control = self.cfg.flows.len();
        for (i, st) in self.stats.iter().enumerate() {
            let (kind, vlan, src, dst) = match self.cfg.flows.get(i) {
                Some(f) => (
                    match f {
                        FlowSpec::Probe(_) => FlowKind::Probe,
                        FlowSpec::Cbr(_) => FlowKind::Cbr,
                    },
                    f.vlan_id(),
                    f.src(),
                    f.dst(),
                ),
                None => {
                    debug_assert_eq!(i, control);
                    (FlowKind::Control, VlanId(0), self.lit_node, self.lit_node)
                }
            };
            self.log.push(LogRecord::FlowSummary {
                t: now,
                flow: FlowId(i as u32),
                kind,
                vlan,
                src,
                dst,
                created: st.created,
                delivered: st.delivered,
                dropped: st.dropped,
                in_flight: st.in_flight,
                delay_sum_ns: st.delay_sum_ns,
            });
        }
        let total = |f: fn(&FlowStats) -> u64| self.stats.iter().map(f).sum::<u64>();
        let end = LogRecord::RunEnd {
            t: now,
            events: self.sched.executed(),
            created: total(|s| s.created),
            delivered: total(|s| s.delivered),
            dropped: total(|s| s.dropped),
            in_flight: total(|s| s.in_flight),
        };
        self.log.push(end);
        RunOutput {
            log: EventLog { records: self.log },
            flows: self.stats,
            events: self.sched.executed(),
        }
    }

    fn dispatch(&mut self, ev: Event) {
        match ev {
            Event::Emit { flow, k } => self.on_emit(flow, k),
            Event::Arrive { pkt, from, to } => self.on_arrive(pkt, from, to),
            Event::Command { idx } => self.on_command(idx),
            Event::PowerDone { device } => self.on_power_done(device),
            Event::Reattach { ue, vlan, onu } => self.reattach(ue, vlan, onu),
            Event::LitDone { episode } => self.on_lit_done(episode),
            Event::TriggerArrive { trigger } => {
                let now = self.now();
                let start = now.max(self.sdn_busy_until);
                let done = start + self.cfg.latency.d_sdn.sample(&mut self.rng);
                self.sdn_busy_until = done;
                self.at(done, Event::SdnDone { trigger });
            }
            Event::SdnDone { trigger } => self.on_sdn_done(&trigger),
            Event::FlowModEffective { fm } => self.on_flow_mod(fm),
            Event::AckArrive { ack } => self.lit.handle_ack(&ack),
        }
    }

    // ---- packets -------------------------------------------------------

    /// Every packet enters the simulation here.
    fn alloc(&mut self, pkt: Packet) -> PktRef {
        self.stats[pkt.flow_id.0 as usize].created += 1;
        let now = self.now();
        self.record(LogDetail::Full, || LogRecord::Create {
            t: now,
            flow: pkt.flow_id,
            seq: pkt.seq,
            kind: pkt.kind,
            vlan: pkt.vlan_id,
            size: pkt.size,
            src: pkt.src,
            dst: pkt.dst,
        });
        let slot = Slot { pkt, alive: true };
        match self.free.pop() {
            Some(r) => {
                self.slab[r as usize] = slot;
                r
            }
            None => {
                self.slab.push(slot);
                (self.slab.len() - 1) as PktRef
            }
        }
    }

    fn release(&mut self, r: PktRef) {
        self.slab[r as usize].alive = false;
        self.free.push(r);
    }

    /// Counts a drop. With `tombstone`, the slot stays reserved until its
    /// pending arrival event fires.
    fn drop_packet(&mut self, r: PktRef, node: NodeId, reason: DropReason, tombstone: bool) {
        let now = self.now();
        let p = &self.slab[r as usize].pkt;
        self.stats[p.flow_id.0 as usize].dropped += 1;
        let (flow, seq, kind, vlan) = (p.flow_id, p.seq, p.kind, p.vlan_id);
        self.record(LogDetail::Standard, || LogRecord::Drop {
            t: now,
            flow,
            seq,
            kind,
            vlan,
            node,
            reason,
        });
        if tombstone {
            self.slab[r as usize].alive = false;
        } else {
            self.release(r);
        }
    }

    fn deliver(&mut self, r: PktRef, node: NodeId) {
        let now = self.now();
        let p = &self.slab[r as usize].pkt;
        let st = &mut self.stats[p.flow_id.0 as usize];
        st.delivered += 1;
        st.delay_sum_ns += (now - p.created_at).as_nanos();
        let (flow, seq, kind, vlan, created_at) = (p.flow_id, p.seq, p.kind, p.vlan_id, p.created_at);
        self.record(LogDetail::Full, || LogRecord::Deliver {
            t: now,
            flow,
            seq,
            kind,
            vlan,
            node,
            created_at,
        });
        self.release(r);
    }

    /// Puts a packet on the link `from -> to`.
    fn send(&mut self, r: PktRef, from: NodeId, to: NodeId) {
        let now = self.now();
        let Some(&(_, qi)) = self.ports[from.index()].iter().find(|(n, _)| *n == to) else {
            self.drop_packet(r, from, DropReason::BadOutput, false);
            return;
        };
        let size = self.slab[r as usize].pkt.size;
        match self.queues[qi].enqueue(r, size, now) {
            EnqueueResult::Accepted { departure, arrival } => {
                if self.cfg.log_detail >= LogDetail::Full {
                    let p = &self.slab[r as usize].pkt;
                    let link = self.queues[qi].link;
                    self.log.push(LogRecord::Enqueue {
                        t: now,
                        flow: p.flow_id,
                        seq: p.seq,
                        kind: p.kind,
                        link,
                        from,
                        to,
                        departure,
                    });
                }
                self.at(arrival, Event::Arrive { pkt: r, from, to });
            }
            EnqueueResult::Dropped(reason) => self.drop_packet(r, from, reason, false),
        }
    }

    fn uplink(&self, host: NodeId) -> Option<NodeId> {
        self.ports[host.index()].first().map(|(n, _)| *n)
    }

    fn on_emit(&mut self, flow: u32, k: u64) {
        let now = self.now();
        let spec = &self.cfg.flows[flow as usize];
        let pkt = Packet {
            flow_id: FlowId(flow),
            seq: k,
            vlan_id: spec.vlan_id(),
            size: spec.wire_size(self.cfg.frame_overhead, self.cfg.probe_size),
            created_at: now,
            kind: spec.packet_kind(),
            src: spec.src(),
            dst: spec.dst(),
            echo_of: None,
        };
        let next = spec.emit_time(SimTime::ZERO, k + 1);
        let src = pkt.src;
        let r = self.alloc(pkt);
        match self.uplink(src) {
            Some(up) => self.send(r, src, up),
            None => self.drop_packet(r, src, DropReason::BadOutput, false),
        }
        if next < self.cfg.t_end {
            self.at(next, Event::Emit { flow, k: k + 1 });
        }
    }

    fn on_arrive(&mut self, r: PktRef, from: NodeId, to: NodeId) {
        if !self.slab[r as usize].alive {
            // Flushed while queued; the drop was counted then.
            self.free.push(r);
            return;
        }
        let now = self.now();
        if self.devices[to.index()].state() != PowerState::On {
            self.drop_packet(r, to, DropReason::DeviceOff, false);
            return;
        }
        if to == self.tap {
            self.capture(r, from);
        }
        let (kind, dst) = {
            let p = &self.slab[r as usize].pkt;
            (p.kind, p.dst)
        };
        if dst == to {
            self.on_destination(r, to);
            return;
        }
        if kind == PacketKind::Control {
            match self.to_lit[to.index()] {
                Some(next) => self.send(r, to, next),
                None => self.drop_packet(r, to, DropReason::BadOutput, false),
            }
            return;
        }
        let node_kind = self.cfg.topology.kind(to);
        if node_kind.is_transparent() {
            let mut out = self.ports[to.index()].iter().map(|(n, _)| *n).filter(|n| *n != from);
            match (out.next(), out.next()) {
                (Some(next), None) => self.send(r, to, next),
                _ => self.drop_packet(r, to, DropReason::BadOutput, false),
            }
            return;
        }
        if !node_kind.is_switch() {
            self.drop_packet(r, to, DropReason::NoMatch, false);
            return;
        }
        let res = self.devices[to.index()]
            .table
            .as_ref()
            .unwrap()
            .forward(&self.slab[r as usize].pkt, from);
        match res {
            ForwardResult::Output(p) if p == from => {
                self.drop_packet(r, to, DropReason::BadOutput, false)
            }
            ForwardResult::Output(p) => self.send(r, to, p),
            ForwardResult::Drop(DropReason::NoMatch) => {
                self.expire_held(to);
                let p = &self.slab[r as usize].pkt;
                let matcher = FlowMatch {
                    in_port: from,
                    vlan_id: p.vlan_id,
                };
                let size = p.size;
                let miss = self.devices[to.index()].miss.as_mut().unwrap();
                if miss.hold(r, matcher, size, now).is_err() {
                    self.drop_packet(r, to, DropReason::MissBufferFull, false);
                }
            }
            ForwardResult::Drop(reason) => self.drop_packet(r, to, reason, false),
        }
    }

    fn on_destination(&mut self, r: PktRef, node: NodeId) {
        let now = self.now();
        let p = self.slab[r as usize].pkt.clone();
        self.deliver(r, node);
        match p.kind {
            PacketKind::ProbeRequest => {
                let reply = Packet {
                    kind: PacketKind::ProbeReply,
                    src: node,
                    dst: p.src,
                    size: self.cfg.probe_size,
                    created_at: now,
                    echo_of: Some(p.created_at),
                    ..p
                };
                let rr = self.alloc(reply);
                match self.uplink(node) {
                    Some(up) => self.send(rr, node, up),
                    None => self.drop_packet(rr, node, DropReason::BadOutput, false),
                }
            }
            PacketKind::Control if node == self.lit_node => {
                let start = now.max(self.lit_busy_until);
                let done = start + self.cfg.latency.d_lit.sample(&mut self.rng);
                self.lit_busy_until = done;
                self.at(done, Event::LitDone {
                    episode: p.seq as u32,
                });
            }
            _ => {}
        }
    }

    fn capture(&mut self, r: PktRef, in_port: NodeId) {
        let now = self.now();
        let p = &self.slab[r as usize].pkt;
        let wanted = match p.kind {
            PacketKind::Control => {
                self.last_control_capture = Some(now);
                true
            }
            PacketKind::ProbeReply => match (self.cfg.capture_window, self.last_control_capture) {
                (None, _) => true,
                (Some(w), Some(c)) => now - c <= w,
                (Some(_), None) => false,
            },
            _ => false,
        };
        if !wanted || self.cfg.log_detail < LogDetail::Standard {
            return;
        }
        let notify = (p.kind == PacketKind::Control)
            .then(|| self.notifies.get(p.seq as usize))
            .flatten();
        self.log.push(LogRecord::Capture {
            t: now,
            tap: self.tap,
            in_port,
            flow: p.flow_id,
            seq: p.seq,
            kind: p.kind,
            vlan: p.vlan_id,
            created_at: p.created_at,
            echo_of: p.echo_of,
            episode: notify.map(|n| n.episode),
            direction: notify.map(|n| n.direction),
            vlans: notify.map(|n| n.vlans.clone()).unwrap_or_default(),
        });
    }

    fn expire_held(&mut self, sw: NodeId) {
        let now = self.now();
        let Some(miss) = self.devices[sw.index()].miss.as_mut() else {
            return;
        };
        if miss.is_empty() {
            return;
        }
        for r in miss.expire(now) {
            self.drop_packet(r, sw, DropReason::MissExpired, false);
        }
    }

    fn release_held(&mut self, sw: NodeId) {
        self.expire_held(sw);
        let dev = &mut self.devices[sw.index()];
        let (Some(miss), Some(table)) = (dev.miss.as_mut(), dev.table.as_ref()) else {
            return;
        };
        if miss.is_empty() {
            return;
        }
        for (r, m, action) in miss.release(table) {
            match action {
                FlowAction::Output(p) if p != m.in_port => self.send(r, sw, p),
                FlowAction::Output(_) => self.drop_packet(r, sw, DropReason::BadOutput, false),
                FlowAction::Drop => self.drop_packet(r, sw, DropReason::ActionDrop, false),
            }
        }
    }

    // ---- power and the OLT agent ----------------------------------------

    fn on_command(&mut self, idx: usize) {
        let now = self.now();
        let cmd = self.cfg.commands[idx];
        self.record(LogDetail::Summary, || LogRecord::Command {
            t: now,
            direction: cmd.direction,
            onu: cmd.onu,
            lc: cmd.lc,
        });
        let devices = &self.devices;
        let power = |d: NodeId| devices[d.index()].state();
        let result = match cmd.direction {
            Direction::Sleep => {
                let off_now: BTreeSet<NodeId> = self
                    .cfg
                    .topology
                    .nodes()
                    .iter()
                    .filter(|n| devices[n.id.index()].state() != PowerState::On)
                    .map(|n| n.id)
                    .collect();
                self.olt
                    .handle_sleep(&self.cfg.topology, cmd.onu, cmd.lc, power, &off_now)
            }
            Direction::Wake => self
                .olt
                .handle_wake(&self.cfg.topology, cmd.onu, cmd.lc, power),
        };
        match result {
            Ok(actions) => self.apply_olt(actions),
            Err(e) => self.warn(format!("{:?} command failed: {e}", cmd.direction)),
        }
    }

    fn warn(&mut self, message: String) {
        let now = self.now();
        self.record(LogDetail::Summary, || LogRecord::Warning { t: now, message });
    }

    fn apply_olt(&mut self, actions: Vec<OltAction>) {
        let now = self.now();
        let mut ready_at = BTreeMap::new();
        for a in actions {
            match a {
                OltAction::SetPower { device, target } => {
                    let machine = self.devices[device.index()]
                        .power
                        .as_mut()
                        .expect("OLT only powers ONUs and line cards");
                    let outcome = machine
                        .set_power(target, now)
                        .map(|done| (done, machine.state(), machine.in_transition()));
                    match outcome {
                        Ok((done, state, in_transition)) => {
                            ready_at.insert(device, done);
                            self.record(LogDetail::Summary, || LogRecord::Power {
                                t: now,
                                device,
                                state,
                            });
                            if in_transition {
                                self.at(done, Event::PowerDone { device });
                            } else if state == PowerState::Off {
                                self.power_lost(device);
                            }
                        }
                        Err(e) => self.warn(e.to_string()),
                    }
                }
                OltAction::Reattach { ue, vlan_id, onu, when } => match when {
                    ReattachWhen::Now => self.reattach(ue, vlan_id, onu),
                    ReattachWhen::AfterPowerOn(d) => {
                        let t = ready_at.get(&d).copied().unwrap_or(now);
                        self.at(t, Event::Reattach {
                            ue,
                            vlan: vlan_id,
                            onu,
                        });
                    }
                },
                OltAction::Notify(n) => self.send_notify(n),
                OltAction::Warning(w) => self.warn(w),
            }
        }
    }

    fn on_power_done(&mut self, device: NodeId) {
        let now = self.now();
        let state = self.devices[device.index()]
            .power
            .as_mut()
            .expect("transition events only target power-managed devices")
            .complete();
        self.record(LogDetail::Summary, || LogRecord::Power {
            t: now,
            device,
            state,
        });
        if state == PowerState::Off {
            self.power_lost(device);
        }
    }

    /// A device that powers off loses whatever its own queues still hold.
    fn power_lost(&mut self, device: NodeId) {
        let now = self.now();
        for qi in self.owned_queues[device.index()].clone() {
            for r in self.queues[qi].flush(now) {
                self.drop_packet(r, device, DropReason::DeviceOff, true);
            }
        }
    }

    fn reattach(&mut self, ue: NodeId, vlan: VlanId, onu: NodeId) {
        let now = self.now();
        let Some(&asw) = self.ue_switch.get(&ue) else {
            self.warn(format!("UE {ue} has no access switch to re-attach through"));
            return;
        };
        let old = self.attached.insert(vlan, onu);
        if old == Some(onu) {
            return;
        }
        let table = self.devices[asw.index()].table.as_mut().unwrap();
        if let Some(old) = old {
            for (_, e) in attachment_entries(asw, ue, old, vlan) {
                table.remove(e.matcher, e.priority);
            }
        }
        for (_, e) in attachment_entries(asw, ue, onu, vlan) {
            table.insert(e);
        }
        self.record(LogDetail::Summary, || LogRecord::Reattach {
            t: now,
            ue,
            vlan,
            onu,
        });
        self.release_held(asw);
    }

    fn send_notify(&mut self, n: OltNotify) {
        let now = self.now();
        let lc = n.lc;
        let (episode, direction, vlans) = (n.episode, n.direction, n.vlans.clone());
        let lit = self.lit_node;
        self.record(LogDetail::Summary, || LogRecord::Control {
            t: now,
            kind: ControlKind::OltNotify,
            sender: lc,
            receiver: lit,
            episode,
            direction,
            vlans,
        });
        debug_assert_eq!(n.episode as usize, self.notifies.len());
        self.notifies.push(n);
        let control_flow = FlowId(self.cfg.flows.len() as u32);
        let r = self.alloc(Packet {
            flow_id: control_flow,
            seq: episode as u64,
            vlan_id: VlanId(0),
            size: CONTROL_PACKET_SIZE,
            created_at: now,
            kind: PacketKind::Control,
            src: lc,
            dst: lit,
            echo_of: None,
        });
        match self.to_lit[lc.index()] {
            Some(next) => self.send(r, lc, next),
            None => self.drop_packet(r, lc, DropReason::BadOutput, false),
        }
    }

    // ---- controllers ------------------------------------------------------

    fn on_lit_done(&mut self, episode: u32) {
        let now = self.now();
        let notify = self.notifies[episode as usize].clone();
        let out = match self.lit.handle_notify(&self.cfg.topology, &notify) {
            Ok(o) => o,
            Err(e) => return self.warn(format!("LiT controller: {e}")),
        };
        self.schedule_mods(out.flow_mods);
        let (lit, sdn) = (self.lit_node, self.sdn_node);
        let trig = out.trigger;
        let vlans = trig.vlans.clone();
        self.record(LogDetail::Summary, || LogRecord::Control {
            t: now,
            kind: ControlKind::Trigger,
            sender: lit,
            receiver: sdn,
            episode,
            direction: notify.direction,
            vlans,
        });
        let arrive = now + self.cfg.latency.d_link.sample(&mut self.rng);
        self.at(arrive, Event::TriggerArrive {
            trigger: Box::new(trig),
        });
    }

    /// Pipelines FlowMods one install latency apart.
    fn schedule_mods(&mut self, mods: Vec<FlowMod>) {
        let now = self.now();
        let lat = self.cfg.latency.install_latency;
        for (k, fm) in mods.into_iter().enumerate() {
            let state = self.devices[fm.switch.index()].state();
            match install_flow(state, fm.switch, now + lat * k as u64, lat) {
                Ok(t) => self.at(t, Event::FlowModEffective { fm }),
                Err(e) => self.warn(e.to_string()),
            }
        }
    }

    fn on_sdn_done(&mut self, trigger: &Trigger) {
        let now = self.now();
        let mods = match self.sdn.handle_trigger(&self.cfg.topology, trigger) {
            Ok(m) => m,
            Err(e) => return self.warn(format!("SDN controller: {e}")),
        };
        for &vlan in &trigger.vlans {
            let hops = self.sdn.current_path(vlan).unwrap_or_default().to_vec();
            let episode = trigger.episode;
            self.record(LogDetail::Summary, || LogRecord::Reroute {
                t: now,
                episode,
                vlan,
                hops,
            });
        }
        if mods.is_empty() {
            if let Some(ack) = self.sdn.take_ack(trigger.episode) {
                self.send_ack(ack);
            }
        } else {
            self.schedule_mods(mods);
        }
    }

    fn on_flow_mod(&mut self, fm: FlowMod) {
        let now = self.now();
        match self.devices[fm.switch.index()].table.as_mut() {
            Some(t) => t.apply(fm.op),
            None => return self.warn(format!("FlowMod for non-switch {}", fm.switch)),
        }
        self.record(LogDetail::Summary, || LogRecord::FlowMod {
            t: now,
            switch: fm.switch,
            episode: fm.episode,
            origin: fm.origin,
            op: fm.op,
        });
        self.release_held(fm.switch);
        match fm.origin {
            Origin::Lit => self.lit.handle_flow_mod_ack(fm.episode),
            Origin::Sdn => {
                if let Some(ack) = self.sdn.handle_flow_mod_ack(fm.episode) {
                    self.send_ack(ack);
                }
            }
        }
    }

    fn send_ack(&mut self, ack: Ack) {
        let now = self.now();
        let (lit, sdn) = (self.lit_node, self.sdn_node);
        let episode = ack.episode;
        let direction = self
            .notifies
            .get(episode as usize)
            .map_or(Direction::Sleep, |n| n.direction);
        let vlans = ack.paths.iter().map(|(v, _)| *v).collect();
        self.record(LogDetail::Summary, || LogRecord::Control {
            t: now,
            kind: ControlKind::Ack,
            sender: sdn,
            receiver: lit,
            episode,
            direction,
            vlans,
        });
        let arrive = now + self.cfg.latency.d_link.sample(&mut self.rng);
        self.at(arrive, Event::AckArrive { ack: Box::new(ack) });
    }
}

/// Runs a configuration to completion.
pub fn run(cfg: RunConfig) -> Result<RunOutput, EngineError> {
    Ok(Simulation::new(cfg)?.finish())
}
