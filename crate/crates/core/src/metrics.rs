//! Post-processing of event logs: tap captures, VLAN reconfiguration times,
//! their PMF, one-way delay and loss.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controlplane::{Direction, Origin};
use crate::dataplane::{FlowId, FlowModOp, PacketKind};
use crate::engine::{EventLog, FlowKind, LogRecord};
use crate::time::SimTime;
use crate::topology::{NodeId, VlanId};

/// Default PMF bin width.
pub const DEFAULT_BIN_WIDTH: SimTime = SimTime::from_millis(10);

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("the log holds control traffic but no captures at tap {0}; rerun with standard or full detail")]
    NoTapData(NodeId),
    #[error("no samples to bin")]
    EmptySamples,
    #[error("bin width must be positive")]
    InvalidBinWidth,
    #[error("flow {0} does not appear in the log")]
    UnknownFlow(FlowId),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One packet seen arriving at the tap.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptureRecord {
    pub tap_node: NodeId,
    pub time: SimTime,
    pub kind: PacketKind,
    pub flow_id: FlowId,
    pub seq: u64,
    pub in_port: NodeId,
    pub vlan_id: VlanId,
    pub created_at: SimTime,
    pub echo_of: Option<SimTime>,
    pub episode: Option<u32>,
    pub direction: Option<Direction>,
    pub vlans: Vec<VlanId>,
}

/// Captures taken at `tap`, in time order.
pub fn captures(log: &EventLog, tap: NodeId) -> Vec<CaptureRecord> {
    log.iter()
        .filter_map(|r| match r {
            LogRecord::Capture {
                t,
                tap: at,
                in_port,
                flow,
                seq,
                kind,
                vlan,
                created_at,
                echo_of,
                episode,
                direction,
                vlans,
            } if *at == tap => Some(CaptureRecord {
                tap_node: *at,
                time: *t,
                kind: *kind,
                flow_id: *flow,
                seq: *seq,
                in_port: *in_port,
                vlan_id: *vlan,
                created_at: *created_at,
                echo_of: *echo_of,
                episode: *episode,
                direction: *direction,
                vlans: vlans.clone(),
            }),
            _ => None,
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReconfigSample {
    pub episode_index: u32,
    pub direction: Direction,
    /// When the OLT notification crossed the tap.
    pub trigger_seen_at: SimTime,
    /// When the first reply to a post-trigger probe crossed the tap.
    pub first_reply_at: SimTime,
    pub duration: SimTime,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ReconfigTimes {
    pub samples: Vec<ReconfigSample>,
    /// Episodes with no qualifying reply before the next notification.
    pub incomplete: Vec<u32>,
}

impl ReconfigTimes {
    pub fn durations(&self, direction: Direction) -> Vec<SimTime> {
        self.samples
            .iter()
            .filter(|s| s.direction == direction)
            .map(|s| s.duration)
            .collect()
    }
}

/// Pairs each notification seen at the tap with the first later reply on
/// one of its VLANs whose request was sent at or after the notification.
/// The reply condition excludes answers to requests that were already in
/// flight, so a sample ends only once the new path carries traffic both
/// ways.
pub fn reconfiguration_times(log: &EventLog, tap: NodeId) -> Result<ReconfigTimes, MetricsError> {
    let caps = captures(log, tap);
    if caps.is_empty() {
        let had_control = log.iter().any(|r| {
            matches!(
                r,
                LogRecord::Control {
                    kind: crate::controlplane::ControlKind::OltNotify,
                    ..
                }
            )
        });
        return if had_control {
            Err(MetricsError::NoTapData(tap))
        } else {
            Ok(ReconfigTimes::default())
        };
    }
    let mut out = ReconfigTimes::default();
    let mut open: Option<&CaptureRecord> = None;
    for c in &caps {
        match c.kind {
            PacketKind::Control => {
                if let Some(prev) = open.take() {
                    out.incomplete.push(prev.episode.unwrap_or(prev.seq as u32));
                }
                open = Some(c);
            }
            PacketKind::ProbeReply => {
                let Some(trig) = open else { continue };
                let fresh = c.echo_of.is_some_and(|e| e >= trig.time);
                if fresh && trig.vlans.contains(&c.vlan_id) {
                    out.samples.push(ReconfigSample {
                        episode_index: trig.episode.unwrap_or(trig.seq as u32),
                        direction: trig.direction.unwrap_or(Direction::Sleep),
                        trigger_seen_at: trig.time,
                        first_reply_at: c.time,
                        duration: c.time - trig.time,
                    });
                    open = None;
                }
            }
            _ => {}
        }
    }
    if let Some(prev) = open {
        out.incomplete.push(prev.episode.unwrap_or(prev.seq as u32));
    }
    Ok(out)
}

/// Instant each episode's reroute became complete: the last flow install
/// issued by the SDN controller.
pub fn reroute_completion(log: &EventLog) -> BTreeMap<u32, SimTime> {
    let mut out = BTreeMap::new();
    for r in log.iter() {
        if let LogRecord::FlowMod {
            t,
            episode,
            origin: Origin::Sdn,
            op: FlowModOp::Add { .. },
            ..
        } = r
        {
            out.insert(*episode, *t);
        }
    }
    out
}

/// Normalized histogram with bins `[k*w, (k+1)*w)`, from the first to the
/// last non-empty bin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pmf {
    pub bin_width: SimTime,
    /// (bin start, probability)
    pub bins: Vec<(SimTime, f64)>,
}

impl Pmf {
    /// Mass of bins starting in `[lo, hi)`.
    pub fn mass_between(&self, lo: SimTime, hi: SimTime) -> f64 {
        self.bins
            .iter()
            .filter(|(s, _)| *s >= lo && *s < hi)
            .map(|(_, p)| p)
            .sum()
    }

    pub fn total(&self) -> f64 {
        self.bins.iter().map(|(_, p)| p).sum()
    }
}

pub fn pmf(samples: &[SimTime], bin_width: SimTime) -> Result<Pmf, MetricsError> {
    if bin_width == SimTime::ZERO {
        return Err(MetricsError::InvalidBinWidth);
    }
    if samples.is_empty() {
        return Err(MetricsError::EmptySamples);
    }
    let w = bin_width.as_nanos();
    let mut counts: BTreeMap<u64, u64> = BTreeMap::new();
    for s in samples {
        *counts.entry(s.as_nanos() / w).or_default() += 1;
    }
    let lo = *counts.keys().next().unwrap();
    let hi = *counts.keys().next_back().unwrap();
    let n = samples.len() as f64;
    let bins = (lo..=hi)
        .map(|k| {
            let c = counts.get(&k).copied().unwrap_or(0);
            (SimTime::from_nanos(k * w), c as f64 / n)
        })
        .collect();
    Ok(Pmf { bin_width, bins })
}

/// Middle value (mean of the two middle values for even counts).
pub fn median(samples: &[SimTime]) -> Option<f64> {
    if samples.is_empty() {
        return None;
    }
    let mut v: Vec<u64> = samples.iter().map(|s| s.as_nanos()).collect();
    v.sort_unstable();
    let n = v.len();
    let ns = if n % 2 == 1 {
        v[n / 2] as f64
    } else {
        (v[n / 2 - 1] as f64 + v[n / 2] as f64) / 2.0
    };
    Some(ns / 1e9)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OneWayStats {
    pub flow_id: FlowId,
    pub kind: FlowKind,
    pub vlan_id: VlanId,
    pub created: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub in_flight: u64,
    /// Seconds; `None` when nothing was delivered.
    pub mean_delay: Option<f64>,
    /// dropped / created.
    pub loss_ratio: f64,
}

/// Per-flow totals from the closing records of a log.
pub fn flow_stats(log: &EventLog) -> Vec<OneWayStats> {
    log.iter()
        .filter_map(|r| match r {
            LogRecord::FlowSummary {
                flow,
                kind,
                vlan,
                created,
                delivered,
                dropped,
                in_flight,
                delay_sum_ns,
                ..
            } => Some(OneWayStats {
                flow_id: *flow,
                kind: *kind,
                vlan_id: *vlan,
                created: *created,
                delivered: *delivered,
                dropped: *dropped,
                in_flight: *in_flight,
                mean_delay: (*delivered > 0)
                    .then(|| *delay_sum_ns as f64 / *delivered as f64 / 1e9),
                loss_ratio: if *created > 0 {
                    *dropped as f64 / *created as f64
                } else {
                    0.0
                },
            }),
            _ => None,
        })
        .collect()
}

/// Mean one-way delay and loss ratio of one flow.
pub fn one_way_stats(log: &EventLog, flow_id: FlowId) -> Result<OneWayStats, MetricsError> {
    flow_stats(log)
        .into_iter()
        .find(|s| s.flow_id == flow_id)
        .ok_or(MetricsError::UnknownFlow(flow_id))
}

/// Delay and loss pooled over every CBR flow of a run.
pub fn cbr_aggregate(log: &EventLog) -> Option<(Option<f64>, f64)> {
    let mut created = 0u64;
    let mut delivered = 0u64;
    let mut dropped = 0u64;
    let mut delay = 0u128;
    let mut any = false;
    for r in log.iter() {
        if let LogRecord::FlowSummary {
            kind: FlowKind::Cbr,
            created: c,
            delivered: d,
            dropped: x,
            delay_sum_ns,
            ..
        } = r
        {
            any = true;
            created += c;
            delivered += d;
            dropped += x;
            delay += *delay_sum_ns as u128;
        }
    }
    any.then(|| {
        let mean = (delivered > 0).then(|| delay as f64 / delivered as f64 / 1e9);
        let loss = if created > 0 {
            dropped as f64 / created as f64
        } else {
            0.0
        };
        (mean, loss)
    })
}

/// Whether every flow's totals balance.
pub fn conservation_ok(log: &EventLog) -> bool {
    let per_flow = flow_stats(log)
        .iter()
        .all(|s| s.created == s.delivered + s.dropped + s.in_flight);
    let total = log.iter().all(|r| match r {
        LogRecord::RunEnd {
            created,
            delivered,
            dropped,
            in_flight,
            ..
        } => *created == delivered + dropped + in_flight,
        _ => true,
    });
    per_flow && total
}

/// One row of the delay / loss grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DelayLossRow {
    pub trec_s: f64,
    pub load_mbps: f64,
    pub mean_delay_ms: Option<f64>,
    pub loss_pct: f64,
    pub eta: f64,
}

/// Everything the run command writes as tables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// False when the log was recorded without tap captures, so no
    /// reconfiguration times could be measured.
    pub reconfig_measured: bool,
    pub reconfig_samples: Vec<ReconfigSample>,
    pub incomplete_episodes: Vec<u32>,
    pub pmf: Option<Pmf>,
    pub flows: Vec<OneWayStats>,
    pub conservation_ok: bool,
}

impl MetricsReport {
    /// The PMF covers sleep-direction episodes only. A log without tap
    /// captures yields no reconfiguration samples rather than an error.
    pub fn from_log(log: &EventLog, tap: NodeId, bin_width: SimTime) -> Result<Self, MetricsError> {
        if bin_width == SimTime::ZERO {
            return Err(MetricsError::InvalidBinWidth);
        }
        let (reconfig_measured, times) = match reconfiguration_times(log, tap) {
            Ok(t) => (true, t),
            Err(MetricsError::NoTapData(_)) => (false, ReconfigTimes::default()),
            Err(e) => return Err(e),
        };
        let sleep = times.durations(Direction::Sleep);
        let pmf = match pmf(&sleep, bin_width) {
            Ok(p) => Some(p),
            Err(MetricsError::EmptySamples) => None,
            Err(e) => return Err(e),
        };
        Ok(MetricsReport {
            reconfig_measured,
            reconfig_samples: times.samples,
            incomplete_episodes: times.incomplete,
            pmf,
            flows: flow_stats(log),
            conservation_ok: conservation_ok(log),
        })
    }

    /// `episode,direction,duration_ms`
    pub fn write_reconfig_csv<W: Write>(&self, w: W) -> Result<(), MetricsError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["episode", "direction", "duration_ms"])?;
        for s in &self.reconfig_samples {
            out.write_record([
                s.episode_index.to_string(),
                match s.direction {
                    Direction::Sleep => "sleep".into(),
                    Direction::Wake => "wake".into(),
                },
                format!("{:.6}", s.duration.as_millis_f64()),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    /// `bin_start_ms,probability`
    pub fn write_pmf_csv<W: Write>(&self, w: W) -> Result<(), MetricsError> {
        write_pmf_csv(self.pmf.as_ref(), w)
    }

    pub fn write_flows_csv<W: Write>(&self, w: W) -> Result<(), MetricsError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "flow",
            "kind",
            "vlan",
            "created",
            "delivered",
            "dropped",
            "in_flight",
            "mean_delay_ms",
            "loss_pct",
        ])?;
        for f in &self.flows {
            out.write_record([
                f.flow_id.to_string(),
                format!("{:?}", f.kind).to_lowercase(),
                f.vlan_id.to_string(),
                f.created.to_string(),
                f.delivered.to_string(),
                f.dropped.to_string(),
                f.in_flight.to_string(),
                f.mean_delay
                    .map(|d| format!("{:.6}", d * 1e3))
                    .unwrap_or_default(),
                format!("{:.6}", f.loss_ratio * 100.0),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

pub fn write_pmf_csv<W: Write>(pmf: Option<&Pmf>, w: W) -> Result<(), MetricsError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["bin_start_ms", "probability"])?;
    for (start, p) in pmf.map(|p| p.bins.as_slice()).unwrap_or_default() {
        out.write_record([format!("{}", start.as_millis_f64()), format!("{p:.9}")])?;
    }
    out.flush()?;
    Ok(())
}

/// `trec_s,load_mbps,mean_delay_ms,loss_pct,eta`
pub fn write_delay_loss_csv<W: Write>(rows: &[DelayLossRow], w: W) -> Result<(), MetricsError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["trec_s", "load_mbps", "mean_delay_ms", "loss_pct", "eta"])?;
    for r in rows {
        out.write_record([
            format!("{}", r.trec_s),
            format!("{}", r.load_mbps),
            r.mean_delay_ms.map(|d| format!("{d:.6}")).unwrap_or_default(),
            format!("{:.6}", r.loss_pct),
            format!("{:.9}", r.eta),
        ])?;
    }
    out.flush()?;
    Ok(())
}
