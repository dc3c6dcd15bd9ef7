//! Bit-stable result files: `trajectory.csv`, `summary.json`, `compare.json`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;
use sha2::{Digest, Sha256};
use wbcmpc::sim::{metrics, Metrics, TrajectoryLog};
use wbcmpc::RobotModel;

/// Version tag of the emitted file schemas.
pub const ARTIFACT_VERSION: &str = concat!("wbcmpc-", env!("CARGO_PKG_VERSION"), "/1");

/// Formats a value with 12 significant digits in scientific notation.
pub fn fmt12(v: f64) -> String {
    let v = if v == 0.0 { 0.0 } else { v };
    format!("{v:.11e}")
}

/// Rounds a value to 12 significant digits so the JSON writer emits a
/// stable decimal.
pub fn round12(v: f64) -> f64 {
    if !v.is_finite() {
        return v;
    }
    fmt12(v).parse().expect("formatted float parses")
}

fn round_all(v: &[f64]) -> Vec<f64> {
    v.iter().copied().map(round12).collect()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Renders the closed-loop log. Task columns are numbered from 1 in
/// priority order. Solver columns are filled on the rows where a
/// subproblem was solved; `solve_ms` is zero unless `timing` is set.
pub fn trajectory_csv(log: &TrajectoryLog, model: &RobotModel, timing: bool) -> String {
    let (n, m, nc) = (model.n(), model.m(), model.nc());
    let dims: Vec<usize> = log.rows.first().map_or_else(Vec::new, |r| r.task_errors.iter().map(|e| e.len()).collect());
    let mut header: Vec<String> = vec!["t".into()];
    header.extend((0..n).map(|i| format!("q_{i}")));
    header.extend((0..n).map(|i| format!("qd_{i}")));
    header.extend((0..m).map(|i| format!("tau_{i}")));
    header.extend((0..nc).map(|i| format!("fc_{i}")));
    for (k, &d) in dims.iter().enumerate() {
        let k = k + 1;
        header.extend((0..d).map(|j| format!("task{k}_x{j}")));
        header.extend((0..d).map(|j| format!("task{k}_xdes{j}")));
        header.extend((0..d).map(|j| format!("task{k}_err{j}")));
        header.push(format!("task{k}_errnorm"));
    }
    header.extend(["solver_status".into(), "solver_iters".into(), "solve_ms".into()]);

    let mut out = header.join(",");
    out.push('\n');
    for row in &log.rows {
        let mut cells: Vec<String> = vec![fmt12(row.t)];
        cells.extend(row.q.iter().map(|v| fmt12(*v)));
        cells.extend(row.qd.iter().map(|v| fmt12(*v)));
        cells.extend(row.torque.iter().map(|v| fmt12(*v)));
        cells.extend(row.force.iter().map(|v| fmt12(*v)));
        for k in 0..dims.len() {
            cells.extend(row.task_positions[k].iter().map(|v| fmt12(*v)));
            cells.extend(row.task_desired[k].iter().map(|v| fmt12(*v)));
            cells.extend(row.task_errors[k].iter().map(|v| fmt12(*v)));
            cells.push(fmt12(row.error_norms[k]));
        }
        match row.solver {
            Some(s) => {
                cells.push(s.status.as_str().into());
                cells.push(s.iterations.to_string());
                cells.push(fmt12(if timing { s.wall_time * 1e3 } else { 0.0 }));
            }
            None => cells.extend([String::new(), "0".into(), fmt12(0.0)]),
        }
        let _ = writeln!(out, "{}", cells.join(","));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaskSummary {
    pub name: String,
    pub priority: usize,
    pub max_abs_error: Vec<f64>,
    pub max_error_norm: f64,
    pub accumulated_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderingSummary {
    pub higher: String,
    pub lower: String,
    pub satisfied_fraction: f64,
    pub max_excess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverSummary {
    pub solves: usize,
    pub total_iterations: usize,
    pub max_iterations: usize,
    /// Number of solves per final solver status.
    pub status_counts: BTreeMap<String, usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub total_wall_time: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_wall_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub artifact_version: String,
    pub scenario: String,
    pub scenario_sha256: String,
    pub controller: String,
    pub steps: usize,
    pub tasks: Vec<TaskSummary>,
    pub accumulated_total: f64,
    /// One entry per consecutive task pair; empty for a single task.
    pub ordering: Vec<OrderingSummary>,
    pub max_constraint_drift: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time: Option<f64>,
}

impl RunSummary {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        scenario: &str,
        scenario_sha256: &str,
        controller: &str,
        log: &TrajectoryLog,
        model: &RobotModel,
        with_solver: bool,
        wall_time: Option<f64>,
    ) -> Self {
        let m: Metrics = metrics(log);
        let records: Vec<_> = log.rows.iter().filter_map(|r| r.solver).collect();
        let timed = wall_time.is_some();
        let solver = with_solver.then(|| {
            let mut status_counts = BTreeMap::new();
            for r in &records {
                *status_counts.entry(r.status.as_str().to_string()).or_insert(0) += 1;
            }
            SolverSummary {
                solves: m.solves,
                total_iterations: m.total_iterations,
                max_iterations: records.iter().map(|r| r.iterations).max().unwrap_or(0),
                status_counts,
                total_wall_time: timed.then(|| round12(m.total_solve_time)),
                max_wall_time: timed.then(|| round12(m.max_solve_time)),
            }
        });
        RunSummary {
            artifact_version: ARTIFACT_VERSION.into(),
            scenario: scenario.into(),
            scenario_sha256: scenario_sha256.into(),
            controller: controller.into(),
            steps: log.rows.len().saturating_sub(1),
            tasks: m
                .tasks
                .iter()
                .enumerate()
                .map(|(k, t)| TaskSummary {
                    name: t.name.clone(),
                    priority: k + 1,
                    max_abs_error: round_all(&t.max_abs_error),
                    max_error_norm: round12(t.max_error_norm),
                    accumulated_norm: round12(t.accumulated_norm),
                })
                .collect(),
            accumulated_total: round12(m.accumulated_total),
            ordering: m
                .ordering
                .iter()
                .map(|o| OrderingSummary {
                    higher: o.higher.clone(),
                    lower: o.lower.clone(),
                    satisfied_fraction: round12(o.satisfied_fraction),
                    max_excess: round12(o.max_excess),
                })
                .collect(),
            max_constraint_drift: round12(log.max_constraint_drift(model)),
            solver,
            wall_time: wall_time.map(round12),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaskComparison {
    pub name: String,
    pub priority: usize,
    pub baseline_max_abs_error: Vec<f64>,
    pub candidate_max_abs_error: Vec<f64>,
    pub baseline_max_error_norm: f64,
    pub candidate_max_error_norm: f64,
    pub baseline_accumulated_norm: f64,
    pub candidate_accumulated_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderingComparison {
    pub higher: String,
    pub lower: String,
    pub baseline_satisfied_fraction: f64,
    pub candidate_satisfied_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareReport {
    pub artifact_version: String,
    pub scenario: String,
    pub scenario_sha256: String,
    pub baseline: String,
    pub candidate: String,
    pub accumulated_baseline: f64,
    pub accumulated_candidate: f64,
    /// `accumulated_candidate / accumulated_baseline`.
    pub ratio: f64,
    pub tasks: Vec<TaskComparison>,
    pub ordering: Vec<OrderingComparison>,
    pub runs: [RunSummary; 2],
}

impl CompareReport {
    pub fn new(baseline: RunSummary, candidate: RunSummary) -> Self {
        let (a, b) = (baseline.accumulated_total, candidate.accumulated_total);
        let ratio = if a == b { 1.0 } else { b / a };
        CompareReport {
            artifact_version: ARTIFACT_VERSION.into(),
            scenario: baseline.scenario.clone(),
            scenario_sha256: baseline.scenario_sha256.clone(),
            baseline: baseline.controller.clone(),
            candidate: candidate.controller.clone(),
            accumulated_baseline: a,
            accumulated_candidate: b,
            ratio: round12(ratio),
            tasks: baseline
                .tasks
                .iter()
                .zip(&candidate.tasks)
                .map(|(x, y)| TaskComparison {
                    name: x.name.clone(),
                    priority: x.priority,
                    baseline_max_abs_error: x.max_abs_error.clone(),
                    candidate_max_abs_error: y.max_abs_error.clone(),
                    baseline_max_error_norm: x.max_error_norm,
                    candidate_max_error_norm: y.max_error_norm,
                    baseline_accumulated_norm: x.accumulated_norm,
                    candidate_accumulated_norm: y.accumulated_norm,
                })
                .collect(),
            ordering: baseline
                .ordering
                .iter()
                .zip(&candidate.ordering)
                .map(|(x, y)| OrderingComparison {
                    higher: x.higher.clone(),
                    lower: x.lower.clone(),
                    baseline_satisfied_fraction: x.satisfied_fraction,
                    candidate_satisfied_fraction: y.satisfied_fraction,
                })
                .collect(),
            runs: [baseline, candidate],
        }
    }
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("summary serializes to JSON");
    s.push('\n');
    s
}
