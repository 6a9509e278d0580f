//! Versioned JSON scenario files: topology choice, workloads, sleep
//! schedule, latency model, power model and measurement settings.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controlplane::Direction;
use crate::dataplane::{DEFAULT_FRAME_OVERHEAD, DEFAULT_PROBE_SIZE};
use crate::energy::PowerModel;
use crate::engine::{LatencyParams, LogDetail, PowerCommand, RandomVar, RunConfig};
use crate::metrics::DEFAULT_BIN_WIDTH;
use crate::time::SimTime;
use crate::topology::{
    validate, NodeId, NodeKind, ReferenceParams, Topology, TopologyDoc, VlanId,
    DEFAULT_BUFFER_LIMIT, REFERENCE_TOPOLOGY_JSON,
};
use crate::traffic::{CbrFlowSpec, FlowSpec, ProbeFlowSpec};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScenarioError {
    #[error("at `{path}` (line {line}, column {column}): {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("`{field}`: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: impl Into<String>, message: impl fmt::Display) -> ScenarioError {
    ScenarioError::Invalid {
        field: field.into(),
        message: message.to_string(),
    }
}

/// Exactly one of `builtin` or `inline`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySource {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
    /// Overrides for the built-in reference topology's link parameters.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<ReferenceParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inline: Option<TopologyDoc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum FlowDoc {
    Probe {
        src: String,
        dst: String,
        interval_s: f64,
        vlan: u16,
    },
    Cbr {
        src: String,
        dst: String,
        payload_bytes: u32,
        load_bps: u64,
        vlan: u16,
    },
}

fn default_off_fraction() -> f64 {
    0.25
}

fn default_on_time() -> f64 {
    60.0
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleDoc {
    #[default]
    None,
    /// Each of `cycles` periods ends with the pair asleep for
    /// `off_fraction` of the period; it wakes at the period boundary.
    DayNight {
        onu: String,
        lc: String,
        cycles: u32,
        period_s: f64,
        #[serde(default = "default_off_fraction")]
        off_fraction: f64,
    },
    /// Repeating cycle starting at t = 0: asleep for `t_rec_s`, then awake
    /// for `on_time_s`. `t_rec_s = 0` never sleeps.
    Periodic {
        onu: String,
        lc: String,
        t_rec_s: f64,
        #[serde(default = "default_on_time")]
        on_time_s: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatencyDoc {
    pub d_lit: RandomVar,
    pub d_sdn: RandomVar,
    pub d_link: RandomVar,
    pub install_latency_s: f64,
    pub transition_s: f64,
}

impl Default for LatencyDoc {
    fn default() -> Self {
        let p = LatencyParams::default();
        LatencyDoc {
            d_lit: p.d_lit,
            d_sdn: p.d_sdn,
            d_link: p.d_link,
            install_latency_s: p.install_latency.as_secs_f64(),
            transition_s: p.transition_time.as_secs_f64(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataplaneDoc {
    pub frame_overhead_bytes: u32,
    pub probe_bytes: u32,
    pub miss_buffer_bytes: u64,
    pub miss_timeout_s: f64,
}

impl Default for DataplaneDoc {
    fn default() -> Self {
        DataplaneDoc {
            frame_overhead_bytes: DEFAULT_FRAME_OVERHEAD,
            probe_bytes: DEFAULT_PROBE_SIZE,
            miss_buffer_bytes: DEFAULT_BUFFER_LIMIT,
            miss_timeout_s: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeasurementDoc {
    /// Tap node label; the aggregation node when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tap: Option<String>,
    /// `null` captures every probe reply.
    pub capture_window_s: Option<f64>,
    pub bin_width_s: f64,
    pub log_detail: LogDetail,
}

impl Default for MeasurementDoc {
    fn default() -> Self {
        MeasurementDoc {
            tap: None,
            capture_window_s: Some(1.0),
            bin_width_s: DEFAULT_BIN_WIDTH.as_secs_f64(),
            log_detail: LogDetail::Standard,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema: u32,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub topology: TopologySource,
    pub seed: u64,
    pub t_end_s: f64,
    #[serde(default)]
    pub flows: Vec<FlowDoc>,
    #[serde(default)]
    pub schedule: ScheduleDoc,
    #[serde(default)]
    pub latency: LatencyDoc,
    #[serde(default)]
    pub power_model: PowerModel,
    #[serde(default)]
    pub dataplane: DataplaneDoc,
    #[serde(default)]
    pub measurement: MeasurementDoc,
}

/// A scenario turned into an engine configuration plus the settings the
/// engine does not need.
#[derive(Clone, Debug)]
pub struct ResolvedScenario {
    pub config: RunConfig,
    pub power_model: PowerModel,
    pub bin_width: SimTime,
    pub tap: NodeId,
}

impl Scenario {
    /// Parses and checks the schema version. Errors name the offending
    /// field path and its position in the text.
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let s: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
            let inner = e.inner();
            ScenarioError::Parse {
                path: e.path().to_string(),
                line: inner.line(),
                column: inner.column(),
                message: inner.to_string(),
            }
        })?;
        if s.schema != SCHEMA_VERSION {
            return Err(invalid(
                "schema",
                format!("unsupported version {} (expected {SCHEMA_VERSION})", s.schema),
            ));
        }
        Ok(s)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenarios always serialize")
    }

    pub fn build_topology(&self) -> Result<Topology, ScenarioError> {
        let src = &self.topology;
        match (&src.builtin, &src.inline) {
            (Some(name), None) => {
                if name != "reference" {
                    return Err(invalid(
                        "topology.builtin",
                        format!("unknown built-in topology '{name}' (known: reference)"),
                    ));
                }
                match &src.params {
                    Some(p) => Ok(p.build()),
                    None => {
                        let doc: TopologyDoc = serde_json::from_str(REFERENCE_TOPOLOGY_JSON)
                            .expect("bundled topology parses");
                        doc.to_topology().map_err(|e| invalid("topology", e))
                    }
                }
            }
            (None, Some(doc)) => {
                if src.params.is_some() {
                    return Err(invalid(
                        "topology.params",
                        "only applies to the built-in topology",
                    ));
                }
                doc.to_topology().map_err(|e| invalid("topology.inline", e))
            }
            _ => Err(invalid(
                "topology",
                "give exactly one of `builtin` or `inline`",
            )),
        }
    }

    /// Resolves labels and checks every field.
    pub fn resolve(&self) -> Result<ResolvedScenario, ScenarioError> {
        if !(self.t_end_s.is_finite() && self.t_end_s > 0.0) {
            return Err(invalid("t_end_s", "must be a positive number of seconds"));
        }
        let topology = self.build_topology()?;
        let report = validate(&topology);
        if !report.is_valid() {
            return Err(invalid("topology", report.to_string().trim_end()));
        }
        let node = |field: String, label: &str| {
            topology
                .find(label)
                .ok_or_else(|| invalid(field, format!("unknown node '{label}'")))
        };

        let mut flows = Vec::new();
        for (i, f) in self.flows.iter().enumerate() {
            let spec = match f {
                FlowDoc::Probe {
                    src,
                    dst,
                    interval_s,
                    vlan,
                } => {
                    if !(interval_s.is_finite() && *interval_s > 0.0) {
                        return Err(invalid(format!("flows[{i}].interval_s"), "must be positive"));
                    }
                    FlowSpec::Probe(ProbeFlowSpec {
                        src: node(format!("flows[{i}].src"), src)?,
                        dst: node(format!("flows[{i}].dst"), dst)?,
                        interval: SimTime::from_secs_f64(*interval_s),
                        vlan_id: VlanId(*vlan),
                    })
                }
                FlowDoc::Cbr {
                    src,
                    dst,
                    payload_bytes,
                    load_bps,
                    vlan,
                } => FlowSpec::Cbr(CbrFlowSpec {
                    src: node(format!("flows[{i}].src"), src)?,
                    dst: node(format!("flows[{i}].dst"), dst)?,
                    payload_size: *payload_bytes,
                    offered_load_bps: *load_bps,
                    vlan_id: VlanId(*vlan),
                }),
            };
            spec.validate(&topology)
                .map_err(|e| invalid(format!("flows[{i}]"), e))?;
            if topology.vlan(spec.vlan_id()).is_none() {
                return Err(invalid(
                    format!("flows[{i}].vlan"),
                    format!("VLAN {} has no provisioned path", spec.vlan_id()),
                ));
            }
            flows.push(spec);
        }

        let t_end = SimTime::from_secs_f64(self.t_end_s);
        let commands = self.schedule_commands(&topology, t_end)?;

        let lat = &self.latency;
        for (f, v) in [("d_lit", lat.d_lit), ("d_sdn", lat.d_sdn), ("d_link", lat.d_link)] {
            if !v.is_valid() {
                return Err(invalid(format!("latency.{f}"), "bounds must be finite, non-negative and ordered"));
            }
        }
        for (f, v) in [
            ("latency.install_latency_s", lat.install_latency_s),
            ("latency.transition_s", lat.transition_s),
            ("dataplane.miss_timeout_s", self.dataplane.miss_timeout_s),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(invalid(f, "must be a non-negative number of seconds"));
            }
        }
        self.power_model
            .validate()
            .map_err(|e| invalid("power_model", e))?;
        if self.dataplane.probe_bytes == 0 {
            return Err(invalid("dataplane.probe_bytes", "must be positive"));
        }
        let m = &self.measurement;
        if !(m.bin_width_s.is_finite() && m.bin_width_s > 0.0) {
            return Err(invalid("measurement.bin_width_s", "must be positive"));
        }
        let capture_window = match m.capture_window_s {
            Some(w) if !(w.is_finite() && w >= 0.0) => {
                return Err(invalid("measurement.capture_window_s", "must be non-negative"))
            }
            Some(w) => Some(SimTime::from_secs_f64(w)),
            None => None,
        };
        let tap = match &m.tap {
            Some(label) => node("measurement.tap".into(), label)?,
            None => topology
                .aggregation_node()
                .ok_or_else(|| invalid("measurement.tap", "topology has no aggregation node"))?,
        };

        let mut config = RunConfig::new(topology, t_end, self.seed);
        config.flows = flows;
        config.commands = commands;
        config.latency = LatencyParams {
            d_lit: lat.d_lit,
            d_sdn: lat.d_sdn,
            d_link: lat.d_link,
            install_latency: SimTime::from_secs_f64(lat.install_latency_s),
            transition_time: SimTime::from_secs_f64(lat.transition_s),
        };
        config.frame_overhead = self.dataplane.frame_overhead_bytes;
        config.probe_size = self.dataplane.probe_bytes;
        config.miss_buffer_bytes = self.dataplane.miss_buffer_bytes;
        config.miss_timeout = SimTime::from_secs_f64(self.dataplane.miss_timeout_s);
        config.tap = Some(tap);
        config.capture_window = capture_window;
        config.log_detail = m.log_detail;
        Ok(ResolvedScenario {
            config,
            power_model: self.power_model,
            bin_width: SimTime::from_secs_f64(m.bin_width_s),
            tap,
        })
    }

    fn schedule_commands(&self, topology: &Topology, t_end: SimTime) -> Result<Vec<PowerCommand>, ScenarioError> {
        let pair = |onu: &str, lc: &str| -> Result<(NodeId, NodeId), ScenarioError> {
            let o = topology
                .find(onu)
                .ok_or_else(|| invalid("schedule.onu", format!("unknown node '{onu}'")))?;
            let l = topology
                .find(lc)
                .ok_or_else(|| invalid("schedule.lc", format!("unknown node '{lc}'")))?;
            if topology.kind(o) != NodeKind::Onu {
                return Err(invalid("schedule.onu", format!("'{onu}' is not an ONU")));
            }
            if topology.kind(l) != NodeKind::OltLineCard {
                return Err(invalid("schedule.lc", format!("'{lc}' is not an OLT line card")));
            }
            if topology.link_between(o, l).is_none() {
                return Err(invalid("schedule", format!("'{onu}' is not attached to '{lc}'")));
            }
            Ok((o, l))
        };
        let cmd = |at: SimTime, direction, (onu, lc): (NodeId, NodeId)| PowerCommand {
            at,
            direction,
            onu,
            lc,
        };
        let mut out = Vec::new();
        match &self.schedule {
            ScheduleDoc::None => {}
            ScheduleDoc::DayNight {
                onu,
                lc,
                cycles,
                period_s,
                off_fraction,
            } => {
                let p = pair(onu, lc)?;
                if !(period_s.is_finite() && *period_s > 0.0) {
                    return Err(invalid("schedule.period_s", "must be positive"));
                }
                if !(0.0..=1.0).contains(off_fraction) {
                    return Err(invalid("schedule.off_fraction", "must lie in [0, 1]"));
                }
                if *cycles as f64 * period_s > self.t_end_s * (1.0 + 1e-12) {
                    return Err(invalid(
                        "schedule.cycles",
                        format!(
                            "{cycles} cycles of {period_s} s do not fit in t_end_s = {}",
                            self.t_end_s
                        ),
                    ));
                }
                let period = SimTime::from_secs_f64(*period_s);
                let awake = SimTime::from_secs_f64(period_s * (1.0 - off_fraction));
                for k in 0..*cycles as u64 {
                    let start = period * k;
                    for (at, dir) in [(start + awake, Direction::Sleep), (start + period, Direction::Wake)] {
                        if at < t_end {
                            out.push(cmd(at, dir, p));
                        }
                    }
                }
            }
            ScheduleDoc::Periodic {
                onu,
                lc,
                t_rec_s,
                on_time_s,
            } => {
                let p = pair(onu, lc)?;
                if !(t_rec_s.is_finite() && *t_rec_s >= 0.0) {
                    return Err(invalid("schedule.t_rec_s", "must be non-negative"));
                }
                if !(on_time_s.is_finite() && *on_time_s > 0.0) {
                    return Err(invalid("schedule.on_time_s", "must be positive"));
                }
                if *t_rec_s > 0.0 {
                    let off = SimTime::from_secs_f64(*t_rec_s);
                    let cycle = off + SimTime::from_secs_f64(*on_time_s);
                    let mut start = SimTime::ZERO;
                    while start < t_end {
                        out.push(cmd(start, Direction::Sleep, p));
                        if start + off < t_end {
                            out.push(cmd(start + off, Direction::Wake, p));
                        }
                        start += cycle;
                    }
                }
            }
        }
        Ok(out)
    }

    /// Human-readable statement of how the schedule is interpreted.
    pub fn schedule_semantics(&self) -> String {
        match &self.schedule {
            ScheduleDoc::None => "no sleep/wake commands".into(),
            ScheduleDoc::DayNight {
                onu,
                lc,
                cycles,
                period_s,
                off_fraction,
            } => format!(
                "{cycles} cycles of {period_s} s; {onu}/{lc} sleep at k*P + (1 - {off_fraction})*P and wake at (k+1)*P; commands at or after t_end are dropped"
            ),
            ScheduleDoc::Periodic {
                onu,
                lc,
                t_rec_s,
                on_time_s,
            } => format!(
                "cycle of {t_rec_s} s asleep then {on_time_s} s awake, first sleep at t=0; {onu}/{lc}; T_rec = 0 never sleeps"
            ),
        }
    }

    /// Same scenario with the periodic sleep duration replaced.
    pub fn with_trec(&self, t_rec_s: f64) -> Result<Scenario, ScenarioError> {
        let mut s = self.clone();
        match &mut s.schedule {
            ScheduleDoc::Periodic { t_rec_s: t, .. } => *t = t_rec_s,
            _ => {
                return Err(invalid(
                    "schedule",
                    "sweeping T_rec needs a periodic schedule",
                ))
            }
        }
        Ok(s)
    }

    /// Same scenario with every CBR flow offering `load_bps`.
    pub fn with_load(&self, load_bps: u64) -> Scenario {
        let mut s = self.clone();
        for f in &mut s.flows {
            if let FlowDoc::Cbr { load_bps: l, .. } = f {
                *l = load_bps;
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "schema": 1,
        "name": "t",
        "topology": {"builtin": "reference"},
        "seed": 1,
        "t_end_s": 10,
        "flows": [{"type": "probe", "src": "UE2", "dst": "NF2", "interval_s": 0.001, "vlan": 2}],
        "schedule": {"mode": "day_night", "onu": "ONU2", "lc": "LC2", "cycles": 2, "period_s": 5}
    }"#;

    #[test]
    fn minimal_resolves() {
        let s = Scenario::from_json(MINIMAL).unwrap();
        let r = s.resolve().unwrap();
        let times: Vec<_> = r
            .config
            .commands
            .iter()
            .map(|c| (c.at.as_millis_f64(), c.direction))
            .collect();
        assert_eq!(
            times,
            [
                (3750.0, Direction::Sleep),
                (5000.0, Direction::Wake),
                (8750.0, Direction::Sleep)
            ]
        );
        assert_eq!(r.tap, r.config.topology.find("L2SW").unwrap());
    }

    #[test]
    fn unknown_field_names_path() {
        let text = MINIMAL.replace("\"interval_s\"", "\"intervall_s\"");
        let err = Scenario::from_json(&text).unwrap_err();
        let ScenarioError::Parse { path, line, .. } = &err else {
            panic!("{err}")
        };
        assert_eq!(path, "flows[0]");
        assert_eq!(*line, 7);
        assert!(err.to_string().contains("intervall_s"), "{err}");
    }

    #[test]
    fn unknown_node_is_named() {
        let text = MINIMAL.replace("\"UE2\"", "\"UE9\"");
        let err = Scenario::from_json(&text).unwrap().resolve().unwrap_err();
        assert_eq!(
            err,
            ScenarioError::Invalid {
                field: "flows[0].src".into(),
                message: "unknown node 'UE9'".into()
            }
        );
    }

    #[test]
    fn periodic_expansion() {
        let mut s = Scenario::from_json(MINIMAL).unwrap();
        s.t_end_s = 240.0;
        s.schedule = ScheduleDoc::Periodic {
            onu: "ONU2".into(),
            lc: "LC2".into(),
            t_rec_s: 30.0,
            on_time_s: 60.0,
        };
        let c = s.resolve().unwrap().config.commands;
        let secs: Vec<_> = c.iter().map(|c| c.at.as_secs_f64()).collect();
        assert_eq!(secs, [0.0, 30.0, 90.0, 120.0, 180.0, 210.0]);
        let none = s.with_trec(0.0).unwrap().resolve().unwrap().config.commands;
        assert!(none.is_empty());
    }

    #[test]
    fn wrong_schema_version() {
        let text = MINIMAL.replace("\"schema\": 1", "\"schema\": 2");
        assert!(matches!(
            Scenario::from_json(&text),
            Err(ScenarioError::Invalid { field, .. }) if field == "schema"
        ));
    }
}
