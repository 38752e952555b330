use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mmwave_relay::config::ExperimentConfig;
use mmwave_relay::experiment::{oracle_report, run_sweep, solve_report, write_sweep, ExperimentError};
use mmwave_relay::pomdp::dp_backup;
use mmwave_relay::pomdp::suite::faulty_backup;

const EXIT_CHECK_FAILED: u8 = 1;
const EXIT_CONFIG: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "mmrelay", version, about = "Belief-threshold relay selection: solver, simulator and checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Flat key=value configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override one configuration key; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output file (sweep CSV, or a copy of the solve/oracle report).
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Write per-slot and obstacle traces for the first `trace.runs` runs.
    #[arg(long, global = true)]
    trace: bool,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Root seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run the oracle checks against a deliberately broken backup step.
    #[arg(long, global = true, hide = true)]
    inject_fault: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print thresholds, the stationary threshold and the failure-run length.
    Solve,
    /// Simulate every (static count, dynamic count, policy) point and write CSVs.
    Sweep,
    /// Run the randomized solver checks; exit 1 on any violation.
    Oracle,
}

fn load(cli: &Cli) -> Result<ExperimentConfig, String> {
    let mut cfg = ExperimentConfig::default();
    if let Some(path) = &cli.config {
        let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        cfg.apply_text(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    }
    for s in &cli.set {
        cfg.apply_override(s).map_err(|e| format!("--set {s}: {e}"))?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(jobs) = cli.jobs {
        cfg.jobs = jobs;
    }
    Ok(cfg)
}

fn emit(report: &str, out: Option<&PathBuf>) -> Result<(), ExitCode> {
    print!("{report}");
    if let Some(path) = out {
        fs::write(path, report).map_err(|e| {
            eprintln!("error: {}: {e}", path.display());
            ExitCode::from(EXIT_CONFIG)
        })?;
    }
    Ok(())
}

fn fail(e: ExperimentError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(EXIT_CONFIG)
}

fn run(cli: Cli) -> Result<ExitCode, ExitCode> {
    let cfg = load(&cli).map_err(|e| {
        eprintln!("error: {e}");
        ExitCode::from(EXIT_CONFIG)
    })?;
    match cli.command {
        Command::Solve => {
            let report = solve_report(&cfg).map_err(fail)?;
            emit(&report, cli.out.as_ref())?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep => {
            let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("sweep.csv"));
            if let Err(e) = fs::File::create(&out) {
                eprintln!("error: {}: {e}", out.display());
                return Err(ExitCode::from(EXIT_CONFIG));
            }
            let sweep = run_sweep(&cfg, cli.trace).map_err(fail)?;
            for path in write_sweep(&cfg, &sweep, &out).map_err(fail)? {
                eprintln!("wrote {}", path.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Oracle => {
            let backup = if cli.inject_fault { faulty_backup } else { dp_backup };
            let report = oracle_report(&cfg, backup);
            emit(&report.render(), cli.out.as_ref())?;
            Ok(if report.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_CHECK_FAILED)
            })
        }
    }
}

fn main() -> ExitCode {
    run(Cli::parse()).unwrap_or_else(|code| code)
}
