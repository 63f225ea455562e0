use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ris_dsca::experiment::{cmd_run, cmd_sweep, cmd_validate, summary_path, RunOptions, SweepSpec, DESK_ELEMENTS};
use ris_dsca::scenario::{default_scenario, ScenarioConfig};
use ris_dsca::validation::Hooks;

#[derive(Parser)]
#[command(name = "ris-dsca", version, about = "Distributed power and metasurface optimization for multi-cell OFDM")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON config file (a scenario for `run`, a sweep description for `sweep`).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config field, e.g. `--set system.M=0` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Full-size surfaces (M = 50) and, for sweeps, 100 realizations.
    #[arg(long = "paper-scale")]
    full_scale: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and dump the result as JSON.
    Run {
        #[command(flatten)]
        common: Common,
        /// Preset user count when no config file is given.
        #[arg(long, default_value_t = 2)]
        preset: usize,
        /// Seed for the channel draw (overrides the config's).
        #[arg(long)]
        seed: Option<u64>,
        /// Include the channels in the dump.
        #[arg(long)]
        dump_channels: bool,
        /// Exchange prices over the message bus and write its log (JSON lines).
        #[arg(long, value_name = "PATH")]
        log_messages: Option<PathBuf>,
        /// Also write the iteration history as CSV.
        #[arg(long, value_name = "PATH")]
        history_csv: Option<PathBuf>,
    },
    /// Monte Carlo sweep over transmit power; writes per-run and summary CSV.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Worker threads.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Number of realizations (overrides the config's).
        #[arg(long)]
        realizations: Option<usize>,
        /// Master seed (overrides the config's).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the oracle suites and print a JSON verdict.
    Validate {
        #[arg(long)]
        out: Option<PathBuf>,
        /// Test hook: negate the analytic prices so the gradient suite must fail.
        #[arg(long, hide = true)]
        flip_price_sign: bool,
    },
}

fn emit(text: &str, out: Option<&Path>) -> ris_dsca::Result<()> {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => println!("{text}"),
    }
    Ok(())
}

fn run_config(common: &Common, preset: usize, seed: Option<u64>) -> ris_dsca::Result<ScenarioConfig> {
    let mut cfg = match &common.config {
        Some(p) => ScenarioConfig::load(p)?,
        None => {
            let mut c = default_scenario(preset)?;
            if !common.full_scale {
                c.elements = DESK_ELEMENTS;
            }
            c
        }
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.with_overrides(&common.overrides)
}

fn execute(cli: Cli) -> ris_dsca::Result<ExitCode> {
    match cli.command {
        Command::Run { common, preset, seed, dump_channels, log_messages, history_csv } => {
            let cfg = run_config(&common, preset, seed)?;
            let dump = cmd_run(&cfg, &RunOptions { dump_channels, message_log: log_messages })?;
            if let Some(path) = history_csv {
                let history: Vec<ris_dsca::dsca::IterationRecord> = serde_json::from_value(dump["history"].clone())?;
                ris_dsca::dsca::save_history_csv(&history, &path)?;
            }
            emit(&serde_json::to_string_pretty(&dump)?, common.out.as_deref())?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep { common, jobs, realizations, seed } => {
            let mut spec = match &common.config {
                Some(p) => SweepSpec::load(p)?,
                None if common.full_scale => SweepSpec::full_scale(),
                None => SweepSpec::default(),
            };
            spec.overrides.extend(common.overrides.iter().cloned());
            if let Some(n) = realizations {
                spec.num_realizations = n;
            }
            if let Some(s) = seed {
                spec.seed = s;
            }
            spec.output_path = common.out.clone();
            let result = cmd_sweep(&spec, jobs)?;
            match &common.out {
                Some(p) => eprintln!("wrote {} and {}", p.display(), summary_path(p).display()),
                None => {
                    print!("{}", result.to_csv_string()?);
                    let mut buf = Vec::new();
                    result.write_summary_csv(&mut buf)?;
                    eprint!("{}", String::from_utf8_lossy(&buf));
                }
            }
            let failed = result.rows.iter().filter(|r| r.error.is_some()).count();
            if failed > 0 {
                eprintln!("{failed} cell(s) failed; see the error column");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { out, flip_price_sign } => {
            let report = cmd_validate(Hooks { flip_price_sign })?;
            emit(&serde_json::to_string_pretty(&report)?, out.as_deref())?;
            Ok(if report.passed { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
