//! Average-power savings of putting one ONU / line-card pair to sleep.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataplane::PowerState;
use crate::engine::{EventLog, LogRecord};
use crate::time::SimTime;
use crate::topology::{NodeId, NodeKind, Topology};

/// Per-device draw in watts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerModel {
    pub p_olt_on: f64,
    pub p_olt_off: f64,
    pub p_onu_on: f64,
    pub p_onu_off: f64,
}

impl Default for PowerModel {
    /// Line card 6 W working / 4.2 W asleep; ONU 3.2 W / 2.3 W. The
    /// line-card sleep figure is an assumption, not a measurement.
    fn default() -> Self {
        PowerModel {
            p_olt_on: 6.0,
            p_olt_off: 4.2,
            p_onu_on: 3.2,
            p_onu_off: 2.3,
        }
    }
}

/// Time spent with the pair awake and asleep, in seconds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DutyCycle {
    pub t_on: f64,
    pub t_off: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnergyError {
    #[error("power values must be finite, non-negative, and no higher asleep than awake")]
    InvalidModel,
    #[error("durations must be non-negative with a positive sum")]
    InvalidDutyCycle,
}

impl PowerModel {
    pub fn validate(&self) -> Result<(), EnergyError> {
        let all = [self.p_olt_on, self.p_olt_off, self.p_onu_on, self.p_onu_off];
        if all.iter().any(|p| !p.is_finite() || *p < 0.0)
            || self.p_olt_off > self.p_olt_on
            || self.p_onu_off > self.p_onu_on
        {
            return Err(EnergyError::InvalidModel);
        }
        Ok(())
    }

    fn draw(&self, kind: NodeKind, state: PowerState) -> f64 {
        let off = state == PowerState::Off;
        match (kind, off) {
            (NodeKind::OltLineCard, false) => self.p_olt_on,
            (NodeKind::OltLineCard, true) => self.p_olt_off,
            (NodeKind::Onu, false) => self.p_onu_on,
            (NodeKind::Onu, true) => self.p_onu_off,
            _ => 0.0,
        }
    }
}

impl DutyCycle {
    pub fn validate(&self) -> Result<(), EnergyError> {
        if !(self.t_on.is_finite() && self.t_off.is_finite())
            || self.t_on < 0.0
            || self.t_off < 0.0
            || self.t_on + self.t_off <= 0.0
        {
            return Err(EnergyError::InvalidDutyCycle);
        }
        Ok(())
    }
}

/// Both pairs awake.
pub fn power_all_on(m: &PowerModel) -> f64 {
    2.0 * (m.p_olt_on + m.p_onu_on)
}

/// One pair awake, the other asleep.
pub fn power_one_pair_off(m: &PowerModel) -> f64 {
    m.p_olt_on + m.p_onu_on + m.p_olt_off + m.p_onu_off
}

/// Fractional saving over the always-on baseline:
/// `1 - (t_on * P_on + t_off * P_off) / (P_on * (t_on + t_off))`.
pub fn energy_savings(m: &PowerModel, d: &DutyCycle) -> f64 {
    savings(power_all_on(m), power_one_pair_off(m), d)
}

/// The same ratio for arbitrary awake / asleep system draws. Zero when the
/// baseline draw is zero.
pub fn savings(p_on: f64, p_off: f64, d: &DutyCycle) -> f64 {
    if p_on == 0.0 {
        return 0.0;
    }
    1.0 - (d.t_on * p_on + d.t_off * p_off) / (p_on * (d.t_on + d.t_off))
}

/// Savings computed two independent ways from a run's power timeline.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    /// Aggregate durations with the pair awake (transitions count as
    /// awake) and fully asleep.
    pub duty: DutyCycle,
    /// `energy_savings` applied to `duty`.
    pub eta: f64,
    /// One minus the time-averaged draw of every ONU and line card over
    /// the always-on draw.
    pub eta_integrated: f64,
}

/// Off-time of every power-managed device, in `[0, t_end]`.
fn off_intervals(log: &EventLog, t_end: SimTime) -> Vec<(NodeId, SimTime)> {
    let mut since: Vec<(NodeId, SimTime)> = Vec::new();
    let mut total: Vec<(NodeId, SimTime)> = Vec::new();
    let add = |total: &mut Vec<(NodeId, SimTime)>, d: NodeId, dt: SimTime| {
        match total.iter_mut().find(|(n, _)| *n == d) {
            Some((_, acc)) => *acc += dt,
            None => total.push((d, dt)),
        }
    };
    for r in log.iter() {
        let LogRecord::Power { t, device, state } = r else {
            continue;
        };
        let open = since.iter().position(|(d, _)| d == device);
        match (state, open) {
            (PowerState::Off, None) => since.push((*device, *t)),
            (PowerState::Off, Some(_)) => {}
            (_, Some(i)) => {
                let (_, t0) = since.remove(i);
                add(&mut total, *device, t.min(&t_end).saturating_sub(t0));
            }
            (_, None) => {}
        }
    }
    for (d, t0) in since {
        add(&mut total, d, t_end.saturating_sub(t0));
    }
    total
}

/// Evaluates the savings of a simulated schedule.
///
/// `t_off` is the time the sleeping pair spends fully off, taken as the
/// line card's off-time (the ONU sleeps and wakes alongside it).
pub fn energy_report(log: &EventLog, topology: &Topology, model: &PowerModel, t_end: SimTime) -> EnergyReport {
    let offs = off_intervals(log, t_end);
    let lc_off = offs
        .iter()
        .filter(|(d, _)| topology.contains(*d) && topology.kind(*d) == NodeKind::OltLineCard)
        .map(|(_, t)| *t)
        .max()
        .unwrap_or(SimTime::ZERO);
    let total = t_end.as_secs_f64();
    let duty = DutyCycle {
        t_on: total - lc_off.as_secs_f64(),
        t_off: lc_off.as_secs_f64(),
    };
    let eta = energy_savings(model, &duty);

    let mut energy = 0.0;
    let mut baseline = 0.0;
    for n in topology.nodes().iter().filter(|n| n.kind.is_power_managed()) {
        let off = offs
            .iter()
            .find(|(d, _)| *d == n.id)
            .map_or(0.0, |(_, t)| t.as_secs_f64());
        let on_w = model.draw(n.kind, PowerState::On);
        let off_w = model.draw(n.kind, PowerState::Off);
        energy += on_w * (total - off) + off_w * off;
        baseline += on_w * total;
    }
    let eta_integrated = if baseline > 0.0 {
        1.0 - energy / baseline
    } else {
        0.0
    };
    EnergyReport {
        duty,
        eta,
        eta_integrated,
    }
}
