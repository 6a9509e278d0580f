//! Run, sweep, report and validate, through the library and the binary.

use std::fs;
use std::path::Path;
use std::process::Command;

use fronthaul_cli::{
    cmd_report, cmd_run, cmd_sweep, cmd_validate, load_scenario, CliError, EXIT_RUNTIME, EXIT_VALIDATION,
};
use fronthaul_sim::scenario::{ScenarioError, ScheduleDoc};
use fronthaul_sim::Scenario;

fn short_daynight() -> Scenario {
    let mut s = load_scenario("daynight").unwrap();
    s.t_end_s = 130.0;
    if let ScheduleDoc::DayNight { cycles, .. } = &mut s.schedule {
        *cycles = 2;
    }
    s
}

fn short_fastonoff() -> Scenario {
    let mut s = load_scenario("fastonoff").unwrap();
    s.t_end_s = 100.0;
    s
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn bundled_scenarios_validate() {
    for name in ["daynight", "fastonoff"] {
        let s = load_scenario(name).unwrap();
        let text = cmd_validate(&s).unwrap();
        assert!(text.contains("is valid"), "{text}");
    }
}

#[test]
fn unknown_node_is_a_validation_error() {
    let mut s = short_daynight();
    s.flows = serde_json::from_str(
        r#"[{"type": "probe", "src": "UE9", "dst": "NF2", "interval_s": 0.001, "vlan": 2}]"#,
    )
    .unwrap();
    let err = cmd_validate(&s).unwrap_err();
    assert_eq!(err.exit_code(), EXIT_VALIDATION);
    assert!(err.to_string().contains("unknown node 'UE9'"), "{err}");
    assert!(err.to_string().contains("flows[0].src"), "{err}");
}

#[test]
fn parse_errors_name_field_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.scenario");
    let text = fronthaul_cli::DAYNIGHT_SCENARIO.replace("\"off_fraction\"", "\"off_fractoin\"");
    fs::write(&path, text).unwrap();
    match load_scenario(path.to_str().unwrap()) {
        Err(CliError::Scenario {
            error: ScenarioError::Parse { path, line, message, .. },
            ..
        }) => {
            assert_eq!(path, "schedule");
            // The key is on line 17; tagged-enum errors point at the
            // enclosing object's end.
            assert!((17..=18).contains(&line), "line {line}");
            assert!(message.contains("off_fractoin"), "{message}");
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn runs_are_repeatable_and_reproducible_from_the_manifest() {
    let s = short_daynight();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let m = cmd_run(&s, a.path()).unwrap();
    assert_eq!(m.summary.sleep_samples, 2);
    assert!(m.summary.conservation_ok);
    assert!(m.summary.incomplete_episodes.is_empty());

    let again = load_scenario(a.path().join("manifest.json").to_str().unwrap()).unwrap();
    assert_eq!(again, s);
    cmd_run(&again, b.path()).unwrap();
    for f in ["events.ndjson", "reconfig.csv", "pmf.csv", "flows.csv"] {
        assert_eq!(read(a.path(), f), read(b.path(), f), "{f}");
    }
    let reconfig = read(a.path(), "reconfig.csv");
    assert_eq!(reconfig.lines().next(), Some("episode,direction,duration_ms"));
    assert_eq!(reconfig.lines().count(), 1 + 4, "two sleeps, two wakes:\n{reconfig}");
}

#[test]
fn report_on_a_run_writes_a_normalized_pmf_idempotently() {
    let dir = tempfile::tempdir().unwrap();
    cmd_run(&short_daynight(), dir.path()).unwrap();
    let files = cmd_report(dir.path()).unwrap();
    assert_eq!(files, vec![dir.path().join("pmf.dat")]);
    let first = read(dir.path(), "pmf.dat");
    let total: f64 = first
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split_whitespace().nth(1).unwrap().parse::<f64>().unwrap())
        .sum();
    assert!((total - 1.0).abs() < 1e-6, "{first}");
    cmd_report(dir.path()).unwrap();
    assert_eq!(first, read(dir.path(), "pmf.dat"));
}

#[test]
fn missing_artifacts_are_named() {
    let dir = tempfile::tempdir().unwrap();
    match cmd_report(dir.path()) {
        Err(CliError::MissingArtifact(p)) => assert_eq!(p, dir.path().join("manifest.json")),
        other => panic!("{other:?}"),
    }
    fs::write(dir.path().join("manifest.json"), "{}").unwrap();
    let err = cmd_report(dir.path()).unwrap_err();
    assert!(err.to_string().contains("events.ndjson"), "{err}");
    assert_eq!(err.exit_code(), EXIT_RUNTIME);
}

#[test]
fn empty_sweep_is_an_empty_table() {
    let dir = tempfile::tempdir().unwrap();
    let m = cmd_sweep(&short_fastonoff(), &[], &[], dir.path()).unwrap();
    assert!(m.cells.is_empty());
    assert_eq!(read(dir.path(), "sweep.csv").trim(), "trec_s,load_mbps,mean_delay_ms,loss_pct,eta");
}

#[test]
fn light_load_sweep_loses_nothing_and_reports_by_trec() {
    let dir = tempfile::tempdir().unwrap();
    let base = short_fastonoff();
    let m = cmd_sweep(&base, &[90.0, 0.0], &[20.0], dir.path()).unwrap();
    assert_eq!(m.failures(), 0);
    let seeds: Vec<u64> = m.cells.iter().map(|c| c.seed).collect();
    assert_eq!(seeds, vec![base.seed, base.seed + 1]);
    for c in &m.cells {
        assert!(c.conservation_ok);
        assert!(c.row.as_ref().unwrap().loss_pct < 0.01, "{c:?}");
    }
    let eta_90 = m.cells[0].row.as_ref().unwrap().eta;
    assert!(eta_90 > 0.0);
    assert_eq!(m.cells[1].row.as_ref().unwrap().eta, 0.0);

    cmd_report(dir.path()).unwrap();
    let delay = read(dir.path(), "delay_vs_trec_20mbps.dat");
    let trecs: Vec<&str> = delay
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split_whitespace().next().unwrap())
        .collect();
    assert_eq!(trecs, ["0", "90"]);
    let grid = read(dir.path(), "loss_grid.csv");
    assert_eq!(grid.lines().next(), Some("trec_s,loss_pct_20mbps"));
    assert_eq!(grid.lines().count(), 3);
}

#[test]
fn sweep_needs_a_periodic_schedule() {
    let dir = tempfile::tempdir().unwrap();
    let err = cmd_sweep(&short_daynight(), &[30.0], &[20.0], dir.path()).unwrap_err();
    assert_eq!(err.exit_code(), EXIT_VALIDATION);
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_fronthaul");
    let dir = tempfile::tempdir().unwrap();

    let ok = Command::new(bin).args(["validate", "--scenario", "fastonoff"]).output().unwrap();
    assert_eq!(ok.status.code(), Some(0));

    let bad = dir.path().join("bad.scenario");
    fs::write(&bad, fronthaul_cli::FASTONOFF_SCENARIO.replace("\"UE2\"", "\"UE3\"")).unwrap();
    let out = Command::new(bin)
        .args(["validate", "--scenario", bad.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(EXIT_VALIDATION));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown node 'UE3'"));

    let out = Command::new(bin)
        .args(["report", "--out", dir.path().join("none").to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(EXIT_RUNTIME));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing artifact"));

    let run_dir = dir.path().join("run");
    let out = Command::new(bin)
        .args(["run", "--scenario", "fastonoff", "--trec", "30", "--load", "20", "--seed", "7"])
        .args(["--out", run_dir.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = read(&run_dir, "delay_loss.csv");
    assert!(rows.lines().nth(1).unwrap().starts_with("30,20,"), "{rows}");
    let manifest: serde_json::Value = serde_json::from_str(&read(&run_dir, "manifest.json")).unwrap();
    assert_eq!(manifest["seed"], 7);
}
