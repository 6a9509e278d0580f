use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fronthaul_cli::{
    cmd_report, cmd_run, cmd_sweep, cmd_validate, describe_run, load_scenario, parse_list, CliError, Overrides,
};

#[derive(Parser)]
#[command(name = "fronthaul", version, about = "Simulate an energy-efficient, SDN-controlled PON fronthaul")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its results directory.
    Run {
        /// Scenario file, run manifest, or bundled name (daynight, fastonoff).
        #[arg(long)]
        scenario: String,
        #[arg(long, default_value = "results")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Sleep duration in seconds (periodic schedules).
        #[arg(long)]
        trec: Option<f64>,
        /// Offered load of every CBR flow, in Mb/s.
        #[arg(long)]
        load: Option<f64>,
    },
    /// Run the T_rec x load cross product of a periodic scenario.
    Sweep {
        #[arg(long)]
        scenario: String,
        #[arg(long, default_value = "sweep")]
        out: PathBuf,
        /// Base seed; cell i uses seed + i.
        #[arg(long)]
        seed: Option<u64>,
        /// Comma-separated sleep durations in seconds.
        #[arg(long, default_value = "0,30,60,90", value_parser = parse_list)]
        trec: std::vec::Vec<f64>,
        /// Comma-separated CBR loads in Mb/s.
        #[arg(long, default_value = "20,80,100", value_parser = parse_list)]
        load: std::vec::Vec<f64>,
    },
    /// Write plot-data files for a run or sweep directory.
    Report {
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
    /// Check a scenario without running it.
    Validate {
        #[arg(long)]
        scenario: String,
    },
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run {
            scenario,
            out,
            seed,
            trec,
            load,
        } => {
            let base = load_scenario(&scenario)?;
            let s = Overrides {
                seed,
                trec_s: trec,
                load_mbps: load,
            }
            .apply(&base)
            .map_err(|error| CliError::Scenario {
                source_name: scenario.clone(),
                error,
            })?;
            let m = cmd_run(&s, &out)?;
            println!("{}", describe_run(&m));
            println!("results in {}", out.display());
        }
        Command::Sweep {
            scenario,
            out,
            seed,
            trec,
            load,
        } => {
            let mut base = load_scenario(&scenario)?;
            if let Some(seed) = seed {
                base.seed = seed;
            }
            let m = cmd_sweep(&base, &trec, &load, &out)?;
            for c in &m.cells {
                match (&c.row, &c.error) {
                    (Some(r), _) => println!(
                        "T_rec {:>4} s, {:>5} Mb/s: loss {:.3}%, delay {} ms, eta {:.6}",
                        c.trec_s,
                        c.load_mbps,
                        r.loss_pct,
                        r.mean_delay_ms.map_or("-".into(), |d| format!("{d:.3}")),
                        r.eta
                    ),
                    (None, Some(e)) => println!("T_rec {} s, {} Mb/s: FAILED: {e}", c.trec_s, c.load_mbps),
                    (None, None) => unreachable!("cells carry a row or an error"),
                }
            }
            println!("results in {}", out.display());
            if m.failures() > 0 {
                return Err(CliError::Runtime(anyhow::anyhow!("{} sweep cells failed", m.failures())));
            }
        }
        Command::Report { out } => {
            for p in cmd_report(&out)? {
                println!("wrote {}", p.display());
            }
        }
        Command::Validate { scenario } => {
            let s = load_scenario(&scenario)?;
            println!("{}", cmd_validate(&s)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
