//! Scenario runner: loads a scenario file, runs the whole-body controller
//! and/or the MPC controller in closed loop, and writes bit-stable results.

// `!(x <= y)`-style checks are used deliberately so that NaN counts as a failure.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod check;
pub mod output;
pub mod scenario;

use std::path::{Path, PathBuf};
use std::time::Instant;

use thiserror::Error;
use wbcmpc::sim::{mpc_run, wbc_run, TrajectoryLog};

use crate::output::{sha256_hex, to_json, trajectory_csv, CompareReport, RunSummary};
use crate::scenario::Setup;

#[derive(Debug, Error)]
pub enum CliError {
    /// Unreadable or invalid input; the message starts with the field path.
    #[error("{0}")]
    Validation(String),
    /// The closed loop aborted (infeasible subproblem, numerical failure).
    #[error("{0}")]
    Runtime(String),
    /// The output directory could not be written.
    #[error("{0}")]
    Output(String),
    #[error("{0} invariant check(s) failed")]
    CheckFailed(usize),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Runtime(_) | CliError::Output(_) => 3,
            CliError::CheckFailed(_) => 1,
        }
    }
}

impl From<wbcmpc::Error> for CliError {
    fn from(e: wbcmpc::Error) -> Self {
        match e {
            wbcmpc::Error::InvalidInput(_) | wbcmpc::Error::ModelFile(_) => CliError::Validation(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Controller {
    Wbc,
    Mpc,
}

impl Controller {
    pub fn as_str(self) -> &'static str {
        match self {
            Controller::Wbc => "wbc",
            Controller::Mpc => "mpc",
        }
    }
}

/// Result of one closed-loop run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub log: TrajectoryLog,
    pub summary: RunSummary,
    pub csv: String,
}

/// A loaded scenario together with its identifying hash.
#[derive(Debug, Clone)]
pub struct LoadedScenario {
    pub name: String,
    pub sha256: String,
    pub setup: Setup,
}

pub fn load_scenario(path: &Path) -> Result<LoadedScenario, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Validation(format!("scenario {}: {e}", path.display())))?;
    let (scenario, setup) = scenario::load(path)?;
    Ok(LoadedScenario {
        name: scenario.name,
        sha256: sha256_hex(&bytes),
        setup,
    })
}

/// Runs one controller. Wall times enter the outputs only when `timing`
/// is set, so that repeated runs are byte-identical by default.
pub fn run_controller(scenario: &LoadedScenario, controller: Controller, timing: bool) -> Result<RunOutput, CliError> {
    let s = &scenario.setup;
    let clock = Instant::now();
    log::info!("running {} on '{}'", controller.as_str(), scenario.name);
    let log = match controller {
        Controller::Wbc => wbc_run(&s.model, &s.tasks, &s.trajectories, &s.x0, &s.horizon, &s.sim)?,
        Controller::Mpc => mpc_run(&s.model, &s.tasks, &s.trajectories, &s.x0, &s.mpc)?.log,
    };
    let elapsed = clock.elapsed().as_secs_f64();
    let summary = RunSummary::new(
        &scenario.name,
        &scenario.sha256,
        controller.as_str(),
        &log,
        &s.model,
        controller == Controller::Mpc,
        timing.then_some(elapsed),
    );
    let csv = trajectory_csv(&log, &s.model, timing);
    Ok(RunOutput { log, summary, csv })
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, CliError> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| CliError::Output(format!("{}: {e}", path.display())))?;
    Ok(path)
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Output(format!("{}: {e}", dir.display())))
}

/// `run`: writes `trajectory.csv` and `summary.json` into `out`.
pub fn run(scenario_path: &Path, controller: Controller, out: &Path, timing: bool) -> Result<RunSummary, CliError> {
    let scenario = load_scenario(scenario_path)?;
    ensure_dir(out)?;
    let result = run_controller(&scenario, controller, timing)?;
    write_file(out, "trajectory.csv", &result.csv)?;
    write_file(out, "summary.json", &to_json(&result.summary))?;
    Ok(result.summary)
}

/// `compare`: runs both controllers concurrently and writes
/// `compare.json` plus each run's files under `<out>/<controller>/`
/// (`<out>/baseline/` and `<out>/candidate/` when both are the same).
pub fn compare(
    scenario_path: &Path,
    out: &Path,
    baseline: Controller,
    candidate: Controller,
    timing: bool,
) -> Result<CompareReport, CliError> {
    let scenario = load_scenario(scenario_path)?;
    ensure_dir(out)?;
    let (a, b) = std::thread::scope(|scope| {
        let a = scope.spawn(|| run_controller(&scenario, baseline, timing));
        let b = scope.spawn(|| run_controller(&scenario, candidate, timing));
        (
            a.join().expect("baseline run panicked"),
            b.join().expect("candidate run panicked"),
        )
    });
    let (a, b) = (a?, b?);
    let (da, db) = if baseline == candidate {
        ("baseline", "candidate")
    } else {
        (baseline.as_str(), candidate.as_str())
    };
    for (dir, r) in [(da, &a), (db, &b)] {
        let sub = out.join(dir);
        ensure_dir(&sub)?;
        write_file(&sub, "trajectory.csv", &r.csv)?;
        write_file(&sub, "summary.json", &to_json(&r.summary))?;
    }
    let report = CompareReport::new(a.summary, b.summary);
    write_file(out, "compare.json", &to_json(&report))?;
    Ok(report)
}

/// Number of random states visited by `check`.
pub const CHECK_SAMPLES: usize = 1000;

/// `check`: validates the model file and runs the invariant suite.
pub fn check(model_path: &Path, samples: usize, seed: u64) -> Result<check::CheckReport, CliError> {
    let model = wbcmpc::RobotModel::from_file(model_path)?;
    Ok(check::check_model(&model, samples, seed))
}
