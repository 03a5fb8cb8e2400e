// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::info;

use tapsweep::campaign::Execution;
use tapsweep::pipeline::{cmd_analyze, cmd_render, cmd_run, load_scenario, PipelineError};

/// Delay-monitor campaign simulator and offline timing diagnosis.
///
/// Log verbosity follows `TAPSWEEP_LOG` (error, warn, info, debug, trace).
#[derive(Parser)]
#[command(name = "tapsweep", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario; writes records.csv and report.json.
    Run {
        scenario: PathBuf,
        /// Output directory; defaults to `[outputs] dir` of the scenario.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Execute windows on one thread. Output is identical either way.
        #[arg(long)]
        sequential: bool,
    },
    /// Analyze an existing records.csv against its scenario; writes report.json.
    Analyze {
        records: PathBuf,
        scenario: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render SVG figures from a report.json.
    Render {
        report: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn out_dir(out: Option<PathBuf>, scenario: &std::path::Path) -> Result<PathBuf, PipelineError> {
    match out {
        Some(o) => Ok(o),
        None => Ok(load_scenario(scenario)?
            .outputs
            .dir
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("."))),
    }
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::Run { scenario, out, sequential } => {
            let out = out_dir(out, &scenario)?;
            let exec = if sequential { Execution::Sequential } else { Execution::Concurrent };
            let report = cmd_run(&scenario, &out, exec)?;
            for c in report.conditions.iter().filter_map(|c| c.verdict.map(|v| (&c.name, v))) {
                info!("{}: {:?}", c.0, c.1.class);
            }
            println!("wrote {}", out.display());
        }
        Command::Analyze { records, scenario, out } => {
            let out = out_dir(out, &scenario)?;
            cmd_analyze(&records, &scenario, &out)?;
            println!("wrote {}", out.join("report.json").display());
        }
        Command::Render { report, out } => {
            for f in cmd_render(&report, &out)? {
                println!("{}", f.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("TAPSWEEP_LOG", "warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
