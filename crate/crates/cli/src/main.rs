use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use wbcmpc_cli::{check, compare, run, CliError, Controller, CHECK_SAMPLES};

#[derive(Debug, Parser)]
#[command(name = "wbcmpc", version, about = "Whole-body control vs. QCQP-based MPC scenario runner")]
struct Cli {
    /// Log verbosity (error, warn, info, debug, trace).
    #[arg(long, global = true, default_value = "warn")]
    log_level: log::LevelFilter,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one controller in closed loop on a scenario.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_enum)]
        controller: Controller,
        #[arg(long)]
        out: PathBuf,
        /// Include wall-clock times in the outputs (breaks byte-identity).
        #[arg(long)]
        timing: bool,
    },
    /// Run two controllers on the same scenario and compare them.
    Compare {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "wbc")]
        baseline: Controller,
        #[arg(long, value_enum, default_value = "mpc")]
        candidate: Controller,
        /// Include wall-clock times in the outputs (breaks byte-identity).
        #[arg(long)]
        timing: bool,
    },
    /// Validate a model file and check dynamics invariants at random states.
    Check {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = CHECK_SAMPLES)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run {
            scenario,
            controller,
            out,
            timing,
        } => {
            let s = run(&scenario, controller, &out, timing)?;
            println!(
                "{}: {} steps, accumulated error norm {:.6}",
                s.controller, s.steps, s.accumulated_total
            );
            if let Some(solver) = &s.solver {
                println!("{} solves, {} iterations", solver.solves, solver.total_iterations);
            }
        }
        Command::Compare {
            scenario,
            out,
            baseline,
            candidate,
            timing,
        } => {
            let r = compare(&scenario, &out, baseline, candidate, timing)?;
            println!(
                "accumulated error norm: {} {:.6}, {} {:.6}, ratio {:.6}",
                r.baseline, r.accumulated_baseline, r.candidate, r.accumulated_candidate, r.ratio
            );
        }
        Command::Check { model, samples, seed } => {
            let report = check(&model, samples, seed)?;
            println!("model '{}', {} random states", report.model, report.samples);
            for r in &report.results {
                println!("{r}");
            }
            let failed = report
                .results
                .iter()
                .filter(|r| r.outcome == wbcmpc_cli::check::Outcome::Fail)
                .count();
            if failed > 0 {
                return Err(CliError::CheckFailed(failed));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    env_logger::Builder::new().filter_level(cli.log_level).init();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
