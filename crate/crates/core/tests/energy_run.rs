//! Energy accounting of a simulated schedule.

mod common;

use common::*;
use fronthaul_sim::energy::{energy_report, energy_savings, DutyCycle, PowerModel};
use fronthaul_sim::{run, SimTime};

#[test]
fn report_matches_formula_on_schedule_durations() {
    let cycles = [
        (SimTime::from_secs(2), SimTime::from_secs(5)),
        (SimTime::from_secs(7), SimTime::from_secs(8)),
    ];
    let cfg = ping_config(SimTime::from_secs(10), 4, &cycles);
    let topo = cfg.topology.clone();
    let out = run(cfg).unwrap();
    let model = PowerModel::default();
    let r = energy_report(&out.log, &topo, &model, SimTime::from_secs(10));
    // Each sleep spends 1 ms turning off (billed as on); waking is billed
    // as on from the command.
    let t_off = 3.0 - 0.001 + 1.0 - 0.001;
    assert!((r.duty.t_off - t_off).abs() < 1e-9, "{:?}", r.duty);
    assert!((r.duty.t_on + r.duty.t_off - 10.0).abs() < 1e-9);
    let expected = energy_savings(&model, &DutyCycle { t_on: 10.0 - t_off, t_off });
    assert!((r.eta - expected).abs() < 1e-12);
    assert!((r.eta_integrated - expected).abs() < 1e-12);
}

#[test]
fn no_sleep_no_savings() {
    let cfg = ping_config(SimTime::from_secs(1), 4, &[]);
    let topo = cfg.topology.clone();
    let out = run(cfg).unwrap();
    let r = energy_report(&out.log, &topo, &PowerModel::default(), SimTime::from_secs(1));
    assert_eq!(r.eta, 0.0);
    assert_eq!(r.eta_integrated, 0.0);
}
