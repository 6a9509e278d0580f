//! Batch front end: single runs, T_rec x load sweeps, plot-data reports
//! and scenario validation.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use fronthaul_sim::energy::{energy_report, EnergyReport};
use fronthaul_sim::engine::{EventLog, LogDetail};
use fronthaul_sim::metrics::{cbr_aggregate, median, write_delay_loss_csv, DelayLossRow, MetricsReport};
use fronthaul_sim::scenario::{FlowDoc, ScenarioError, ScheduleDoc};
use fronthaul_sim::{run, Scenario};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DAYNIGHT_SCENARIO: &str = include_str!("../scenarios/daynight.scenario");
pub const FASTONOFF_SCENARIO: &str = include_str!("../scenarios/fastonoff.scenario");

pub const MANIFEST_VERSION: u32 = 1;

/// Exit status for a scenario that fails to parse or validate.
pub const EXIT_VALIDATION: i32 = 1;
/// Exit status for a failure while running or reporting.
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{source_name}: {error}")]
    Scenario {
        source_name: String,
        error: ScenarioError,
    },
    #[error("missing artifact: {}", .0.display())]
    MissingArtifact(PathBuf),
    #[error(transparent)]
    Runtime(#[from] anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Scenario { .. } => EXIT_VALIDATION,
            _ => EXIT_RUNTIME,
        }
    }
}

fn scenario_error(source_name: &str, error: ScenarioError) -> CliError {
    CliError::Scenario {
        source_name: source_name.to_string(),
        error,
    }
}

/// Text of a bundled scenario by name (`daynight`, `fastonoff`).
pub fn bundled(name: &str) -> Option<&'static str> {
    match name.trim_end_matches(".scenario") {
        "daynight" => Some(DAYNIGHT_SCENARIO),
        "fastonoff" => Some(FASTONOFF_SCENARIO),
        _ => None,
    }
}

/// Loads a scenario from a file, a bundled name, or a run manifest (whose
/// `scenario` field is the exact scenario that was run).
pub fn load_scenario(arg: &str) -> Result<Scenario, CliError> {
    let path = Path::new(arg);
    let text = if path.exists() {
        fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))?
    } else if let Some(text) = bundled(arg) {
        text.to_string()
    } else {
        return Err(CliError::Runtime(anyhow::anyhow!(
            "no scenario file '{arg}' (bundled: daynight, fastonoff)"
        )));
    };
    if let Ok(m) = serde_json::from_str::<RunManifest>(&text) {
        return Ok(m.scenario);
    }
    Scenario::from_json(&text).map_err(|e| scenario_error(arg, e))
}

/// Command-line overrides applied on top of a scenario.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub trec_s: Option<f64>,
    pub load_mbps: Option<f64>,
}

pub fn mbps_to_bps(mbps: f64) -> u64 {
    (mbps * 1e6).round() as u64
}

impl Overrides {
    pub fn apply(&self, s: &Scenario) -> Result<Scenario, ScenarioError> {
        let mut s = s.clone();
        if let Some(seed) = self.seed {
            s.seed = seed;
        }
        if let Some(t) = self.trec_s {
            s = s.with_trec(t)?;
        }
        if let Some(l) = self.load_mbps {
            s = s.with_load(mbps_to_bps(l));
        }
        Ok(s)
    }
}

/// Checks a scenario and describes what it would run.
pub fn cmd_validate(s: &Scenario) -> Result<String, CliError> {
    let r = s.resolve().map_err(|e| scenario_error(&s.name, e))?;
    let c = &r.config;
    Ok(format!(
        "scenario '{}' is valid: {} nodes, {} links, {} flows, {} power commands over {} (seed {})\nschedule: {}",
        s.name,
        c.topology.nodes().len(),
        c.topology.links().len(),
        c.flows.len(),
        c.commands.len(),
        c.t_end,
        c.seed,
        s.schedule_semantics()
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub events: u64,
    pub wall_clock_s: f64,
    pub reconfig_measured: bool,
    pub reconfig_samples: usize,
    pub sleep_samples: usize,
    pub incomplete_episodes: Vec<u32>,
    pub median_sleep_reconfig_ms: Option<f64>,
    pub cbr_mean_delay_ms: Option<f64>,
    pub cbr_loss_pct: Option<f64>,
    pub energy: EnergyReport,
    pub conservation_ok: bool,
}

/// Everything needed to reproduce and interpret a run directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub manifest_version: u32,
    pub tool_version: String,
    pub scenario: Scenario,
    pub seed: u64,
    pub schedule_semantics: String,
    pub tap: String,
    pub loss_definition: String,
    pub pmf_direction: String,
    pub outputs: Vec<String>,
    pub summary: RunSummary,
}

const LOSS_DEFINITION: &str = "dropped / created per flow, pooled over CBR flows; packets still queued at t_end are in flight, not lost";

fn create(dir: &Path, name: &str) -> anyhow::Result<BufWriter<File>> {
    let path = dir.join(name);
    let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn periodic_trec(s: &Scenario) -> Option<f64> {
    match s.schedule {
        ScheduleDoc::Periodic { t_rec_s, .. } => Some(t_rec_s),
        ScheduleDoc::None => Some(0.0),
        ScheduleDoc::DayNight { .. } => None,
    }
}

fn cbr_load_mbps(s: &Scenario) -> Option<f64> {
    s.flows.iter().find_map(|f| match f {
        FlowDoc::Cbr { load_bps, .. } => Some(*load_bps as f64 / 1e6),
        _ => None,
    })
}

/// Runs a scenario and writes the event log, CSV tables and manifest into
/// `out`.
pub fn cmd_run(s: &Scenario, out: &Path) -> Result<RunManifest, CliError> {
    let resolved = s.resolve().map_err(|e| scenario_error(&s.name, e))?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let topology = resolved.config.topology.clone();
    let t_end = resolved.config.t_end;
    let started = Instant::now();
    let output = run(resolved.config).context("simulation failed")?;
    let wall_clock_s = started.elapsed().as_secs_f64();
    let log = &output.log;

    let mut outputs = vec!["events.ndjson".to_string()];
    log.write_ndjson(create(out, "events.ndjson")?)
        .context("writing events.ndjson")?;

    let report = MetricsReport::from_log(log, resolved.tap, resolved.bin_width).context("computing metrics")?;
    report
        .write_reconfig_csv(create(out, "reconfig.csv")?)
        .context("writing reconfig.csv")?;
    report
        .write_pmf_csv(create(out, "pmf.csv")?)
        .context("writing pmf.csv")?;
    report
        .write_flows_csv(create(out, "flows.csv")?)
        .context("writing flows.csv")?;
    outputs.extend(["reconfig.csv", "pmf.csv", "flows.csv"].map(String::from));

    let energy = energy_report(log, &topology, &resolved.power_model, t_end);
    let cbr = cbr_aggregate(log);
    if let (Some((delay, loss)), Some(trec), Some(load)) = (cbr, periodic_trec(s), cbr_load_mbps(s)) {
        let row = DelayLossRow {
            trec_s: trec,
            load_mbps: load,
            mean_delay_ms: delay.map(|d| d * 1e3),
            loss_pct: loss * 100.0,
            eta: energy.eta,
        };
        write_delay_loss_csv(&[row], create(out, "delay_loss.csv")?).context("writing delay_loss.csv")?;
        outputs.push("delay_loss.csv".into());
    }

    let sleep = report
        .reconfig_samples
        .iter()
        .filter(|x| x.direction == fronthaul_sim::controlplane::Direction::Sleep)
        .map(|x| x.duration)
        .collect::<Vec<_>>();
    let summary = RunSummary {
        events: output.events,
        wall_clock_s,
        reconfig_measured: report.reconfig_measured,
        reconfig_samples: report.reconfig_samples.len(),
        sleep_samples: sleep.len(),
        incomplete_episodes: report.incomplete_episodes.clone(),
        median_sleep_reconfig_ms: median(&sleep).map(|m| m * 1e3),
        cbr_mean_delay_ms: cbr.and_then(|(d, _)| d).map(|d| d * 1e3),
        cbr_loss_pct: cbr.map(|(_, l)| l * 100.0),
        energy,
        conservation_ok: output.conservation_ok() && report.conservation_ok,
    };
    outputs.push("manifest.json".into());
    let manifest = RunManifest {
        manifest_version: MANIFEST_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        scenario: s.clone(),
        seed: s.seed,
        schedule_semantics: s.schedule_semantics(),
        tap: topology.label(resolved.tap).to_string(),
        loss_definition: LOSS_DEFINITION.into(),
        pmf_direction: "sleep episodes only".into(),
        outputs,
        summary,
    };
    let mut w = create(out, "manifest.json")?;
    serde_json::to_writer_pretty(&mut w, &manifest).context("writing manifest.json")?;
    writeln!(w).context("writing manifest.json")?;
    w.flush().context("writing manifest.json")?;
    Ok(manifest)
}

/// One cell of a sweep, successful or not.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub index: usize,
    pub trec_s: f64,
    pub load_mbps: f64,
    pub seed: u64,
    pub wall_clock_s: f64,
    /// created = delivered + dropped + in flight held for every flow.
    pub conservation_ok: bool,
    pub row: Option<DelayLossRow>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepManifest {
    pub manifest_version: u32,
    pub tool_version: String,
    pub base: Scenario,
    pub seed_policy: String,
    pub schedule_semantics: String,
    pub loss_definition: String,
    pub cells: Vec<SweepCell>,
}

impl SweepManifest {
    pub fn failures(&self) -> usize {
        self.cells.iter().filter(|c| c.error.is_some()).count()
    }
}

fn run_cell(base: &Scenario, index: usize, trec_s: f64, load_mbps: f64) -> SweepCell {
    let seed = base.seed.wrapping_add(index as u64);
    let started = Instant::now();
    let mut conserved = false;
    let result = (|| -> anyhow::Result<DelayLossRow> {
        let mut s = base.with_trec(trec_s)?.with_load(mbps_to_bps(load_mbps));
        s.seed = seed;
        s.measurement.log_detail = LogDetail::Summary;
        let r = s.resolve()?;
        let topology = r.config.topology.clone();
        let t_end = r.config.t_end;
        let out = run(r.config)?;
        conserved = out.conservation_ok();
        let (delay, loss) = cbr_aggregate(&out.log).context("the base scenario has no CBR flow")?;
        let energy = energy_report(&out.log, &topology, &r.power_model, t_end);
        Ok(DelayLossRow {
            trec_s,
            load_mbps,
            mean_delay_ms: delay.map(|d| d * 1e3),
            loss_pct: loss * 100.0,
            eta: energy.eta,
        })
    })();
    let (row, error) = match result {
        Ok(r) => (Some(r), None),
        Err(e) => (None, Some(format!("{e:#}"))),
    };
    SweepCell {
        index,
        trec_s,
        load_mbps,
        seed,
        wall_clock_s: started.elapsed().as_secs_f64(),
        conservation_ok: conserved,
        row,
        error,
    }
}

/// Runs every (T_rec, load) cell, T_rec-major, in parallel. Cell `i` uses
/// seed `base.seed + i`. Failed cells are recorded in the manifest and
/// left out of `sweep.csv`.
pub fn cmd_sweep(base: &Scenario, trecs_s: &[f64], loads_mbps: &[f64], out: &Path) -> Result<SweepManifest, CliError> {
    base.resolve().map_err(|e| scenario_error(&base.name, e))?;
    if !trecs_s.is_empty() {
        base.with_trec(trecs_s[0])
            .map_err(|e| scenario_error(&base.name, e))?;
    }
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let grid: Vec<(usize, f64, f64)> = trecs_s
        .iter()
        .flat_map(|&t| loads_mbps.iter().map(move |&l| (t, l)))
        .enumerate()
        .map(|(i, (t, l))| (i, t, l))
        .collect();
    let cells: Vec<SweepCell> = grid
        .par_iter()
        .map(|&(i, t, l)| run_cell(base, i, t, l))
        .collect();
    let rows: Vec<DelayLossRow> = cells.iter().filter_map(|c| c.row.clone()).collect();
    write_delay_loss_csv(&rows, create(out, "sweep.csv")?).context("writing sweep.csv")?;
    let manifest = SweepManifest {
        manifest_version: MANIFEST_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        base: base.clone(),
        seed_policy: "cell i (T_rec-major order) runs with seed base.seed + i".into(),
        schedule_semantics: base.schedule_semantics(),
        loss_definition: LOSS_DEFINITION.into(),
        cells,
    };
    let mut w = create(out, "sweep_manifest.json")?;
    serde_json::to_writer_pretty(&mut w, &manifest).context("writing sweep_manifest.json")?;
    writeln!(w).context("writing sweep_manifest.json")?;
    w.flush().context("writing sweep_manifest.json")?;
    Ok(manifest)
}

/// Reads the `trec_s,load_mbps,mean_delay_ms,loss_pct,eta` table.
pub fn read_delay_loss_csv(path: &Path) -> Result<Vec<DelayLossRow>, CliError> {
    if !path.exists() {
        return Err(CliError::MissingArtifact(path.to_path_buf()));
    }
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let mut rows = Vec::new();
    for rec in r.deserialize() {
        let row: DelayLossRow = rec.with_context(|| format!("parsing {}", path.display()))?;
        rows.push(row);
    }
    Ok(rows)
}

fn require(dir: &Path, name: &str) -> Result<PathBuf, CliError> {
    let p = dir.join(name);
    if p.exists() {
        Ok(p)
    } else {
        Err(CliError::MissingArtifact(p))
    }
}

fn fmt_num(x: f64) -> String {
    format!("{x}")
}

/// Turns a run or sweep directory into two-column plot-data files.
///
/// A run directory (with `manifest.json`) yields `pmf.dat`, recomputed
/// from `events.ndjson`. A sweep directory (with `sweep.csv`) yields one
/// `delay_vs_trec_<load>mbps.dat` per load, rows ordered by T_rec, and the
/// T_rec x load `loss_grid.csv`. Returns the files written.
pub fn cmd_report(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut written = Vec::new();
    if dir.join("sweep.csv").exists() {
        let rows = read_delay_loss_csv(&dir.join("sweep.csv"))?;
        let mut by_load: BTreeMap<u64, Vec<&DelayLossRow>> = BTreeMap::new();
        for r in &rows {
            by_load.entry(r.load_mbps.to_bits()).or_default().push(r);
        }
        let mut loads: Vec<f64> = by_load.keys().map(|b| f64::from_bits(*b)).collect();
        loads.sort_by(f64::total_cmp);
        for load in &loads {
            let mut series = by_load[&load.to_bits()].clone();
            series.sort_by(|a, b| a.trec_s.total_cmp(&b.trec_s));
            let path = dir.join(format!("delay_vs_trec_{}mbps.dat", fmt_num(*load)));
            let mut w = create(dir, path.file_name().unwrap().to_str().unwrap())?;
            writeln!(w, "# trec_s mean_delay_ms").context("writing plot data")?;
            for r in series {
                if let Some(d) = r.mean_delay_ms {
                    writeln!(w, "{} {d:.6}", fmt_num(r.trec_s)).context("writing plot data")?;
                }
            }
            w.flush().context("writing plot data")?;
            written.push(path);
        }
        let mut trecs: Vec<f64> = rows.iter().map(|r| r.trec_s).collect();
        trecs.sort_by(f64::total_cmp);
        trecs.dedup();
        let mut w = csv::Writer::from_writer(create(dir, "loss_grid.csv")?);
        let mut header = vec!["trec_s".to_string()];
        header.extend(loads.iter().map(|l| format!("loss_pct_{}mbps", fmt_num(*l))));
        w.write_record(&header).context("writing loss_grid.csv")?;
        for t in &trecs {
            let mut rec = vec![fmt_num(*t)];
            for l in &loads {
                let cell = rows.iter().find(|r| r.trec_s == *t && r.load_mbps == *l);
                rec.push(cell.map(|r| format!("{:.3}", r.loss_pct)).unwrap_or_default());
            }
            w.write_record(&rec).context("writing loss_grid.csv")?;
        }
        w.flush().context("writing loss_grid.csv")?;
        written.push(dir.join("loss_grid.csv"));
        return Ok(written);
    }

    let manifest_path = require(dir, "manifest.json")?;
    let events_path = require(dir, "events.ndjson")?;
    let manifest: RunManifest = serde_json::from_reader(BufReader::new(
        File::open(&manifest_path).context("opening manifest.json")?,
    ))
    .context("parsing manifest.json")?;
    let log = EventLog::read_ndjson(BufReader::new(
        File::open(&events_path).context("opening events.ndjson")?,
    ))
    .context("parsing events.ndjson")?;
    let resolved = manifest
        .scenario
        .resolve()
        .map_err(|e| scenario_error("manifest.json", e))?;
    let report = MetricsReport::from_log(&log, resolved.tap, resolved.bin_width).context("computing metrics")?;
    let mut w = create(dir, "pmf.dat")?;
    writeln!(w, "# bin_start_ms probability").context("writing pmf.dat")?;
    if let Some(p) = &report.pmf {
        for (start, prob) in &p.bins {
            writeln!(w, "{} {prob:.9}", fmt_num(start.as_millis_f64())).context("writing pmf.dat")?;
        }
    }
    w.flush().context("writing pmf.dat")?;
    written.push(dir.join("pmf.dat"));
    Ok(written)
}

/// Parses a comma-separated list of numbers.
pub fn parse_list(text: &str) -> Result<Vec<f64>, String> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|e| format!("'{s}': {e}")))
        .collect()
}

/// Wall-clock-free summary line for a run.
pub fn describe_run(m: &RunManifest) -> String {
    let s = &m.summary;
    let mut line = format!(
        "{}: {} events, {} reconfiguration samples ({} sleep, {} incomplete)",
        m.scenario.name,
        s.events,
        s.reconfig_samples,
        s.sleep_samples,
        s.incomplete_episodes.len()
    );
    if let Some(med) = s.median_sleep_reconfig_ms {
        line += &format!(", median {med:.3} ms");
    }
    if let Some(l) = s.cbr_loss_pct {
        line += &format!(", CBR loss {l:.3}%");
    }
    line += &format!(", eta {:.6}", s.energy.eta);
    line
}
