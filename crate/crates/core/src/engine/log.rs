use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::controlplane::{ControlKind, Direction, Origin};
use crate::dataplane::{DropReason, FlowId, FlowModOp, PacketKind, PowerState};
use crate::time::SimTime;
use crate::topology::{LinkId, NodeId, VlanId};

/// What a flow generates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowKind {
    Probe,
    Cbr,
    Control,
}

/// One line of the event log. Times are integer nanoseconds.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "ev", rename_all = "snake_case")]
pub enum LogRecord {
    RunStart {
        t: SimTime,
        seed: u64,
        t_end: SimTime,
    },
    Create {
        t: SimTime,
        flow: FlowId,
        seq: u64,
        kind: PacketKind,
        vlan: VlanId,
        size: u32,
        src: NodeId,
        dst: NodeId,
    },
    Enqueue {
        t: SimTime,
        flow: FlowId,
        seq: u64,
        kind: PacketKind,
        link: LinkId,
        from: NodeId,
        to: NodeId,
        departure: SimTime,
    },
    Deliver {
        t: SimTime,
        flow: FlowId,
        seq: u64,
        kind: PacketKind,
        vlan: VlanId,
        node: NodeId,
        created_at: SimTime,
    },
    Drop {
        t: SimTime,
        flow: FlowId,
        seq: u64,
        kind: PacketKind,
        vlan: VlanId,
        node: NodeId,
        reason: DropReason,
    },
    /// A packet observed arriving at the tap.
    Capture {
        t: SimTime,
        tap: NodeId,
        in_port: NodeId,
        flow: FlowId,
        seq: u64,
        kind: PacketKind,
        vlan: VlanId,
        created_at: SimTime,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        echo_of: Option<SimTime>,
        /// For control packets: the notification carried.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        episode: Option<u32>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        direction: Option<Direction>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        vlans: Vec<VlanId>,
    },
    Command {
        t: SimTime,
        direction: Direction,
        onu: NodeId,
        lc: NodeId,
    },
    Power {
        t: SimTime,
        device: NodeId,
        state: PowerState,
    },
    /// A control message leaves its sender.
    Control {
        t: SimTime,
        kind: ControlKind,
        sender: NodeId,
        receiver: NodeId,
        episode: u32,
        direction: Direction,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        vlans: Vec<VlanId>,
    },
    /// A flow-table change takes effect.
    FlowMod {
        t: SimTime,
        switch: NodeId,
        episode: u32,
        origin: Origin,
        op: FlowModOp,
    },
    Reattach {
        t: SimTime,
        ue: NodeId,
        vlan: VlanId,
        onu: NodeId,
    },
    Reroute {
        t: SimTime,
        episode: u32,
        vlan: VlanId,
        hops: Vec<NodeId>,
    },
    Warning {
        t: SimTime,
        message: String,
    },
    FlowSummary {
        t: SimTime,
        flow: FlowId,
        kind: FlowKind,
        vlan: VlanId,
        src: NodeId,
        dst: NodeId,
        created: u64,
        delivered: u64,
        dropped: u64,
        in_flight: u64,
        delay_sum_ns: u64,
    },
    RunEnd {
        t: SimTime,
        events: u64,
        created: u64,
        delivered: u64,
        dropped: u64,
        in_flight: u64,
    },
}

impl LogRecord {
    pub fn time(&self) -> SimTime {
        use LogRecord::*;
        match self {
            RunStart { t, .. }
            | Create { t, .. }
            | Enqueue { t, .. }
            | Deliver { t, .. }
            | Drop { t, .. }
            | Capture { t, .. }
            | Command { t, .. }
            | Power { t, .. }
            | Control { t, .. }
            | FlowMod { t, .. }
            | Reattach { t, .. }
            | Reroute { t, .. }
            | Warning { t, .. }
            | FlowSummary { t, .. }
            | RunEnd { t, .. } => *t,
        }
    }
}

/// The complete, replayable record of one run.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EventLog {
    pub records: Vec<LogRecord>,
}

impl EventLog {
    pub fn iter(&self) -> std::slice::Iter<'_, LogRecord> {
        self.records.iter()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// One JSON object per line.
    pub fn write_ndjson<W: Write>(&self, mut w: W) -> io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        w.flush()
    }

    pub fn to_ndjson(&self) -> String {
        let mut buf = Vec::new();
        self.write_ndjson(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("JSON is UTF-8")
    }

    pub fn read_ndjson<R: BufRead>(r: R) -> io::Result<Self> {
        let mut records = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec = serde_json::from_str(&line).map_err(|e| {
                io::Error::new(io::ErrorKind::InvalidData, format!("line {}: {e}", i + 1))
            })?;
            records.push(rec);
        }
        Ok(EventLog { records })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ndjson_roundtrip() {
        let log = EventLog {
            records: vec![
                LogRecord::RunStart {
                    t: SimTime::ZERO,
                    seed: 1,
                    t_end: SimTime::from_secs(2),
                },
                LogRecord::FlowSummary {
                    t: SimTime::from_secs(2),
                    flow: FlowId(0),
                    kind: FlowKind::Cbr,
                    vlan: VlanId(1),
                    src: NodeId(0),
                    dst: NodeId(11),
                    created: 3,
                    delivered: 2,
                    dropped: 1,
                    in_flight: 0,
                    delay_sum_ns: u64::MAX - 7,
                },
            ],
        };
        let text = log.to_ndjson();
        assert!(text.starts_with(r#"{"ev":"run_start","t":0,"seed":1"#));
        assert_eq!(EventLog::read_ndjson(text.as_bytes()).unwrap(), log);
    }
}
