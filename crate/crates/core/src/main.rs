// SPDX-License-Identifier: Apache-2.0
use std::io;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mcastsim::config;
use mcastsim::scenario::{load_files, LoadError, Shell, SimInstance};
use mcastsim::sim::{render_log, SimTime};

#[derive(Parser)]
#[command(name = "mcastsim", version, about = "Deterministic multicast routing simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(clap::Args)]
struct Bundle {
    #[arg(long)]
    topology: String,
    /// NODE=FILE, once per router
    #[arg(long = "config", value_parser = node_file)]
    configs: Vec<(String, String)>,
    #[arg(long)]
    scenario: String,
    /// Stop at this simulated time (ms) instead of the scenario's end
    #[arg(long)]
    until: Option<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario and check its assertions
    Run {
        #[command(flatten)]
        bundle: Bundle,
        /// Write the event log here
        #[arg(long)]
        log: Option<String>,
        /// Write the run report here instead of stdout
        #[arg(long)]
        report: Option<String>,
    },
    /// Parse and validate one configuration file
    CheckConfig { file: String },
    /// Run to the horizon, then answer show commands on stdin
    Shell {
        #[command(flatten)]
        bundle: Bundle,
    },
}

fn node_file(s: &str) -> Result<(String, String), String> {
    match s.split_once('=') {
        Some((n, f)) if !n.is_empty() && !f.is_empty() => Ok((n.to_string(), f.to_string())),
        _ => Err(format!("expected NODE=FILE, got `{s}`")),
    }
}

fn load(b: &Bundle) -> Result<SimInstance, ExitCode> {
    load_files(&b.topology, &b.configs, &b.scenario, b.until.map(SimTime)).map_err(|errs: Vec<LoadError>| {
        for e in errs {
            eprintln!("{e}");
        }
        ExitCode::from(2)
    })
}

fn write_file(path: &str, text: &str) -> Result<(), ExitCode> {
    std::fs::write(path, text).map_err(|e| {
        eprintln!("{path}: {e}");
        ExitCode::from(2)
    })
}

fn run(cli: Cli) -> Result<ExitCode, ExitCode> {
    match cli.cmd {
        Cmd::Run { bundle, log, report } => {
            let mut inst = load(&bundle)?;
            let mut rep = inst.run();
            if let Some(p) = &log {
                write_file(p, &render_log(inst.net.log()))?;
                rep.log_path = Some(p.clone());
            }
            match &report {
                Some(p) => {
                    write_file(p, &rep.to_string())?;
                    for a in &rep.assertions {
                        println!("{a}");
                    }
                }
                None => print!("{rep}"),
            }
            Ok(ExitCode::from(rep.exit_code() as u8))
        }
        Cmd::CheckConfig { file } => {
            let text = std::fs::read_to_string(&file).map_err(|e| {
                eprintln!("{file}: {e}");
                ExitCode::from(2)
            })?;
            match config::load(&text) {
                Ok(_) => {
                    println!("{file}: ok");
                    Ok(ExitCode::SUCCESS)
                }
                Err(errs) => {
                    for e in errs {
                        println!("{file}:{}:{}: {}", e.pos.line, e.pos.col, e.message);
                    }
                    Ok(ExitCode::from(1))
                }
            }
        }
        Cmd::Shell { bundle } => {
            let mut inst = load(&bundle)?;
            inst.net.run_until(inst.horizon);
            Shell::new(&inst.net).run(io::stdin().lock(), io::stdout().lock()).map_err(|e| {
                eprintln!("{e}");
                ExitCode::from(2)
            })?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    run(Cli::parse()).unwrap_or_else(|c| c)
}
