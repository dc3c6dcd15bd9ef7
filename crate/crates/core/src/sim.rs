//! Closed-loop simulation: plant integration, the WBC and receding-horizon
//! MPC control loops, trajectory logs and error metrics.

use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::dynamics::{eval_dynamics, PlantState};
use crate::error::{Error, Result};
use crate::linalg::{pinv, vstack_vec};
use crate::model::RobotModel;
use crate::nominal::{build_nominal, NominalOptions, TaskTrajectory};
use crate::qcqp::{solve, SolverMode, SolverSettings, SolverStatus};
use crate::task::{ordered_tasks, TaskDef};
use crate::transcription::{
    transcribe, Convexification, HierarchySpec, HorizonSpec, TranscriptionOptions, DEFAULT_FORCE_WEIGHT,
};
use crate::wbc::{pd_targets, wbc_hierarchy};

/// Tolerance of the logged hierarchy-ordering check `‖e_k‖ <= ‖e_{k+1}‖ + tol`.
pub const ORDERING_TOL: f64 = 1e-3;

/// Plant integration settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSettings {
    /// Integration step (s); the control period must be a multiple of it.
    pub dt_sim: f64,
    pub baumgarte_alpha: f64,
    pub baumgarte_beta: f64,
}

impl Default for SimSettings {
    fn default() -> Self {
        SimSettings {
            dt_sim: 1e-3,
            baumgarte_alpha: 20.0,
            baumgarte_beta: 20.0,
        }
    }
}

impl SimSettings {
    pub fn validate(&self, dt: f64) -> Result<usize> {
        if !(self.dt_sim > 0.0) || !(self.dt_sim <= dt * (1.0 + 1e-12)) {
            return Err(Error::invalid(format!(
                "sim.dt_sim: must lie in (0, {dt}], found {}",
                self.dt_sim
            )));
        }
        if !(self.baumgarte_alpha >= 0.0) || !(self.baumgarte_beta >= 0.0) {
            return Err(Error::invalid("sim: Baumgarte gains must be nonnegative"));
        }
        let ratio = dt / self.dt_sim;
        let substeps = ratio.round();
        if (ratio - substeps).abs() > 1e-9 * ratio {
            return Err(Error::invalid(format!(
                "sim.dt_sim: control period {dt} is not a multiple of {}",
                self.dt_sim
            )));
        }
        Ok(substeps as usize)
    }
}

/// Constrained acceleration with Baumgarte stabilization:
/// `q̈ = M⁻¹(Ncᵀ Uᵀ Γ - b_c) - 2α Jc⁺ (Jc q̇) - β² Jc⁺ (f_c(q) - c)`.
pub fn stabilized_acceleration(
    model: &RobotModel,
    q: &DVector<f64>,
    qd: &DVector<f64>,
    gamma: &DVector<f64>,
    settings: &SimSettings,
) -> Result<DVector<f64>> {
    let terms = eval_dynamics(model, q, qd)?;
    let mut qdd = terms.forward_dynamics(gamma);
    if model.nc() > 0 {
        let jc_pinv = pinv(&terms.jc);
        let correction = (&terms.jc * qd) * (2.0 * settings.baumgarte_alpha)
            + model.constraint_residual(q) * settings.baumgarte_beta.powi(2);
        qdd -= jc_pinv * correction;
    }
    Ok(qdd)
}

/// One classical fourth-order Runge–Kutta step of length `dt_sim` with the
/// torque held constant.
pub fn simulate_step(
    model: &RobotModel,
    state: &PlantState,
    gamma: &DVector<f64>,
    dt_sim: f64,
    settings: &SimSettings,
) -> Result<PlantState> {
    let n = model.n();
    if state.q.len() != n || state.qd.len() != n || gamma.len() != model.m() {
        return Err(Error::invalid("simulate_step: dimension mismatch"));
    }
    let f = |q: &DVector<f64>, qd: &DVector<f64>| -> Result<(DVector<f64>, DVector<f64>)> {
        Ok((qd.clone(), stabilized_acceleration(model, q, qd, gamma, settings)?))
    };
    let (q, qd) = (&state.q, &state.qd);
    let h = dt_sim;
    let (k1q, k1v) = f(q, qd)?;
    let (k2q, k2v) = f(&(q + &k1q * (h / 2.0)), &(qd + &k1v * (h / 2.0)))?;
    let (k3q, k3v) = f(&(q + &k2q * (h / 2.0)), &(qd + &k2v * (h / 2.0)))?;
    let (k4q, k4v) = f(&(q + &k3q * h), &(qd + &k3v * h))?;
    let q_next = q + (k1q + k2q * 2.0 + k3q * 2.0 + k4q) * (h / 6.0);
    let qd_next = qd + (k1v + k2v * 2.0 + k3v * 2.0 + k4v) * (h / 6.0);
    if q_next.iter().chain(qd_next.iter()).any(|v| !v.is_finite()) {
        return Err(Error::numerical("plant state became non-finite"));
    }
    Ok(PlantState::new(q_next, qd_next))
}

/// Integrates over one control period with zero-order-hold torque.
pub fn advance(
    model: &RobotModel,
    state: &PlantState,
    gamma: &DVector<f64>,
    dt: f64,
    settings: &SimSettings,
) -> Result<PlantState> {
    let substeps = settings.validate(dt)?;
    let h = dt / substeps as f64;
    let mut s = state.clone();
    for _ in 0..substeps {
        s = simulate_step(model, &s, gamma, h, settings)?;
    }
    Ok(s)
}

/// Solver outcome recorded on the log row at which a subproblem was solved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverRecord {
    pub status: SolverStatus,
    pub iterations: usize,
    /// Wall time in seconds.
    pub wall_time: f64,
}

/// One logged control step. The torque is the one applied over
/// `[t, t + Δt)`; the final row carries a zero torque.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub t: f64,
    pub q: DVector<f64>,
    pub qd: DVector<f64>,
    pub torque: DVector<f64>,
    /// Constraint force implied by the applied torque at this state.
    pub force: DVector<f64>,
    pub task_positions: Vec<DVector<f64>>,
    pub task_desired: Vec<DVector<f64>>,
    pub task_errors: Vec<DVector<f64>>,
    pub error_norms: Vec<f64>,
    pub solver: Option<SolverRecord>,
}

/// Closed-loop log with `N + 1` rows on the control grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog {
    /// Task names in priority order.
    pub task_names: Vec<String>,
    pub dt: f64,
    pub rows: Vec<LogRow>,
}

impl TrajectoryLog {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Largest constraint residual `‖f_c(q) - c‖∞` over the log.
    pub fn max_constraint_drift(&self, model: &RobotModel) -> f64 {
        if model.nc() == 0 {
            return 0.0;
        }
        self.rows
            .iter()
            .map(|r| model.constraint_residual(&r.q).amax())
            .fold(0.0, f64::max)
    }
}

#[allow(clippy::too_many_arguments)]
fn log_row(
    model: &RobotModel,
    tasks: &[TaskDef],
    trajectories: &[TaskTrajectory],
    index: usize,
    t: f64,
    state: &PlantState,
    torque: &DVector<f64>,
    solver: Option<SolverRecord>,
) -> Result<LogRow> {
    let terms = eval_dynamics(model, &state.q, &state.qd)?;
    let task_positions: Vec<_> = tasks.iter().map(|k| k.position(model, &state.q)).collect();
    let task_desired: Vec<_> = trajectories.iter().map(|tr| tr.position(index).clone()).collect();
    let task_errors: Vec<_> = task_desired.iter().zip(&task_positions).map(|(d, x)| d - x).collect();
    let error_norms = task_errors.iter().map(|e| e.norm()).collect();
    Ok(LogRow {
        t,
        q: state.q.clone(),
        qd: state.qd.clone(),
        torque: torque.clone(),
        force: terms.constraint_force(torque),
        task_positions,
        task_desired,
        task_errors,
        error_norms,
        solver,
    })
}

/// Sorts tasks (and their trajectories) by priority after validation.
fn prepare(
    model: &RobotModel,
    tasks: &[TaskDef],
    trajectories: &[TaskTrajectory],
    x0: &PlantState,
    horizon: &HorizonSpec,
) -> Result<(Vec<TaskDef>, Vec<TaskTrajectory>)> {
    horizon.validate()?;
    if tasks.len() != trajectories.len() {
        return Err(Error::invalid("one trajectory per task is required"));
    }
    let sorted = ordered_tasks(model, tasks)?;
    let mut order: Vec<usize> = (0..tasks.len()).collect();
    order.sort_by_key(|&i| tasks[i].priority);
    let trajs: Vec<_> = order.iter().map(|&i| trajectories[i].clone()).collect();
    for (t, tr) in sorted.iter().zip(&trajs) {
        tr.validate(t, horizon.n)?;
    }
    if x0.q.len() != model.n() || x0.qd.len() != model.n() {
        return Err(Error::invalid("initial state dimension does not match the model"));
    }
    if x0.q.iter().chain(x0.qd.iter()).any(|v| !v.is_finite()) {
        return Err(Error::invalid("initial state is not finite"));
    }
    Ok((sorted, trajs))
}

fn at_time(err: Error, t: f64) -> Error {
    match err {
        Error::NumericalFailure(msg) => Error::numerical(format!("t = {t:.4} s: {msg}")),
        other => other,
    }
}

/// Baseline: hierarchical WBC with PD targets from the measured state at
/// every control step.
pub fn wbc_run(
    model: &RobotModel,
    tasks: &[TaskDef],
    trajectories: &[TaskTrajectory],
    x0: &PlantState,
    horizon: &HorizonSpec,
    sim: &SimSettings,
) -> Result<TrajectoryLog> {
    let (tasks, trajectories) = prepare(model, tasks, trajectories, x0, horizon)?;
    sim.validate(horizon.dt())?;
    let dt = horizon.dt();
    let mut state = x0.clone();
    let mut rows = Vec::with_capacity(horizon.n + 1);
    for i in 0..horizon.n {
        let t = horizon.time(i);
        let terms = eval_dynamics(model, &state.q, &state.qd).map_err(|e| at_time(e, t))?;
        let x_des: Vec<_> = trajectories.iter().map(|tr| tr.position(i).clone()).collect();
        let xd_des: Vec<_> = trajectories.iter().map(|tr| tr.velocity(i)).collect();
        let xdd = pd_targets(model, &state, &tasks, &x_des, &xd_des);
        let cmd = wbc_hierarchy(model, &terms, &state, &tasks, &xdd)?;
        rows.push(log_row(model, &tasks, &trajectories, i, t, &state, &cmd.torque, None)?);
        state = advance(model, &state, &cmd.torque, dt, sim).map_err(|e| at_time(e, t))?;
    }
    let t = horizon.time(horizon.n);
    rows.push(log_row(model, &tasks, &trajectories, horizon.n, t, &state, &DVector::zeros(model.m()), None)?);
    Ok(TrajectoryLog {
        task_names: tasks.iter().map(|t| t.name.clone()).collect(),
        dt,
        rows,
    })
}

/// State fed back into each subproblem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum FeedbackMode {
    /// The optimizer's own predicted state after the committed steps.
    Predicted,
    /// The simulated plant state.
    #[default]
    Measured,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpcConfig {
    pub horizon: HorizonSpec,
    pub hierarchy: HierarchySpec,
    /// Emit the hierarchy inequalities.
    pub hierarchy_constraints: bool,
    pub feedback: FeedbackMode,
    pub solver: SolverSettings,
    /// Weight on the constraint-force inputs.
    pub force_weight: f64,
    pub sim: SimSettings,
    pub nominal: NominalOptions,
    /// Start each solve from the nominal inputs.
    pub warm_start: bool,
}

impl MpcConfig {
    pub fn new(horizon: HorizonSpec, n_tasks: usize) -> Self {
        MpcConfig {
            horizon,
            hierarchy: HierarchySpec::weak(n_tasks),
            hierarchy_constraints: true,
            feedback: FeedbackMode::Measured,
            solver: SolverSettings::default(),
            force_weight: DEFAULT_FORCE_WEIGHT,
            sim: SimSettings::default(),
            nominal: NominalOptions::default(),
            warm_start: true,
        }
    }
}

/// Outcome of one subproblem solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveRecord {
    pub subproblem: usize,
    /// Global index of the window's first step.
    pub start: usize,
    pub status: SolverStatus,
    pub iterations: usize,
    pub wall_time: f64,
    pub objective: f64,
    pub local_only: bool,
}

#[derive(Debug, Clone)]
pub struct MpcRun {
    /// Committed states: the fed-back state of each window followed by the
    /// optimizer's predictions over its committed steps (`N + 1` entries).
    pub states: Vec<DVector<f64>>,
    /// Committed inputs `[Γ; F_c]` (`N` entries).
    pub inputs: Vec<DVector<f64>>,
    pub log: TrajectoryLog,
    pub solves: Vec<SolveRecord>,
}

/// Receding-horizon MPC: per window build the nominal from the fed-back
/// state, transcribe, solve the condensed QCQP, apply the first `Ne` torques
/// to the plant and feed back per `config.feedback`.
pub fn mpc_run(
    model: &RobotModel,
    tasks: &[TaskDef],
    trajectories: &[TaskTrajectory],
    x0: &PlantState,
    config: &MpcConfig,
) -> Result<MpcRun> {
    let horizon = &config.horizon;
    let (tasks, trajectories) = prepare(model, tasks, trajectories, x0, horizon)?;
    config.sim.validate(horizon.dt())?;
    config.solver.validate()?;
    let mut settings = config.solver;
    if config.hierarchy.convexification == Convexification::Raw {
        settings.mode = SolverMode::NonconvexLocal;
    }
    let options = TranscriptionOptions {
        hierarchy: config.hierarchy.clone(),
        force_weight: config.force_weight,
        hierarchy_constraints: config.hierarchy_constraints,
    };
    let (n, m) = (model.n(), model.m());
    let nu = m + model.nc();
    let dt = horizon.dt();

    let mut plant = x0.clone();
    let mut fed_back = x0.clone();
    let mut states = vec![vstack_vec(&[&x0.q, &x0.qd])];
    let mut inputs = Vec::with_capacity(horizon.n);
    let mut rows = Vec::with_capacity(horizon.n + 1);
    let mut solves = Vec::with_capacity(horizon.subproblems());

    for s in 0..horizon.subproblems() {
        let start = s * horizon.ne;
        let nominal = build_nominal(model, &fed_back, &tasks, &trajectories, horizon, start, &config.nominal)?;
        let xt = vstack_vec(&[&fed_back.q, &fed_back.qd]);
        let problem = transcribe(model, &tasks, &trajectories, &nominal, &xt, horizon, &options)?;
        let condensed = problem.condensed();
        let warm = config
            .warm_start
            .then(|| vstack_vec(&(0..horizon.np).map(|i| nominal.input(i)).collect::<Vec<_>>().iter().collect::<Vec<_>>()));
        let clock = Instant::now();
        let sol = solve(&condensed, &settings, warm.as_ref())?;
        let wall_time = clock.elapsed().as_secs_f64();
        match sol.status {
            SolverStatus::Optimal => {}
            SolverStatus::MaxIters if sol.residuals.primal_eq <= 1e-6 && sol.residuals.primal_ineq <= 1e-6 => {
                log::warn!("subproblem {s} (step {start}): iteration budget exhausted; using the feasible iterate");
            }
            SolverStatus::Infeasible => {
                let worst = condensed
                    .ineqs
                    .iter()
                    .zip(&problem.ineq_labels)
                    .map(|(g, &(step, task))| (g.eval(&sol.z), step, task))
                    .fold((f64::NEG_INFINITY, 0, 0), |a, b| if b.0 > a.0 { b } else { a });
                return Err(Error::Infeasible {
                    subproblem: s,
                    detail: format!(
                        "window starting at step {start}: {}; worst ordering constraint at prediction step {} (tasks {}/{}) = {:.3e}",
                        sol.message,
                        worst.1,
                        worst.2 + 1,
                        worst.2 + 2,
                        worst.0
                    ),
                });
            }
            other => {
                return Err(Error::numerical(format!(
                    "subproblem {s} (step {start}): solver returned {}: {}",
                    other.as_str(),
                    sol.message
                )));
            }
        }
        solves.push(SolveRecord {
            subproblem: s,
            start,
            status: sol.status,
            iterations: sol.iterations,
            wall_time,
            objective: sol.objective,
            local_only: sol.local_only,
        });
        let predicted = problem.states(&sol.z);
        for j in 0..horizon.ne {
            let i = start + j;
            let t = horizon.time(i);
            let u = sol.z.rows(j * nu, nu).into_owned();
            let torque = u.rows(0, m).into_owned();
            let record = (j == 0).then_some(SolverRecord {
                status: sol.status,
                iterations: sol.iterations,
                wall_time,
            });
            rows.push(log_row(model, &tasks, &trajectories, i, t, &plant, &torque, record)?);
            plant = advance(model, &plant, &torque, dt, &config.sim).map_err(|e| at_time(e, t))?;
            inputs.push(u);
            states.push(predicted.rows((j + 1) * 2 * n, 2 * n).into_owned());
        }
        fed_back = match config.feedback {
            FeedbackMode::Measured => plant.clone(),
            FeedbackMode::Predicted => {
                let x = predicted.rows(horizon.ne * 2 * n, 2 * n);
                PlantState::new(x.rows(0, n).into_owned(), x.rows(n, n).into_owned())
            }
        };
    }
    let t = horizon.time(horizon.n);
    rows.push(log_row(model, &tasks, &trajectories, horizon.n, t, &plant, &DVector::zeros(m), None)?);
    Ok(MpcRun {
        states,
        inputs,
        log: TrajectoryLog {
            task_names: tasks.iter().map(|t| t.name.clone()).collect(),
            dt,
            rows,
        },
        solves,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaskMetrics {
    pub name: String,
    /// Largest `|e_k|` per task axis over the log.
    pub max_abs_error: Vec<f64>,
    pub max_error_norm: f64,
    /// `Σ_i ‖e_k(t_i)‖` over all logged steps.
    pub accumulated_norm: f64,
    pub error_norms: Vec<f64>,
}

/// Ordering of one consecutive task pair, `‖e_k‖ <= ‖e_{k+1}‖ + ORDERING_TOL`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderingMetrics {
    pub higher: String,
    pub lower: String,
    pub satisfied_fraction: f64,
    /// Largest `‖e_k‖ - ‖e_{k+1}‖` over the log.
    pub max_excess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub tasks: Vec<TaskMetrics>,
    /// Sum of the per-task accumulated norms.
    pub accumulated_total: f64,
    pub ordering: Vec<OrderingMetrics>,
    pub solves: usize,
    pub total_iterations: usize,
    pub total_solve_time: f64,
    pub max_solve_time: f64,
}

pub fn metrics(log: &TrajectoryLog) -> Metrics {
    let tasks: Vec<TaskMetrics> = log
        .task_names
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let dim = log.rows.first().map_or(0, |r| r.task_errors[k].len());
            let mut max_abs = vec![0.0f64; dim];
            let mut norms = Vec::with_capacity(log.rows.len());
            for r in &log.rows {
                for (a, e) in max_abs.iter_mut().zip(r.task_errors[k].iter()) {
                    *a = a.max(e.abs());
                }
                norms.push(r.error_norms[k]);
            }
            TaskMetrics {
                name: name.clone(),
                max_abs_error: max_abs,
                max_error_norm: norms.iter().copied().fold(0.0, f64::max),
                accumulated_norm: norms.iter().sum(),
                error_norms: norms,
            }
        })
        .collect();
    let ordering = tasks
        .windows(2)
        .map(|w| {
            let pairs = w[0].error_norms.iter().zip(&w[1].error_norms);
            let ok = pairs.clone().filter(|(h, l)| **h <= **l + ORDERING_TOL).count();
            OrderingMetrics {
                higher: w[0].name.clone(),
                lower: w[1].name.clone(),
                satisfied_fraction: if log.rows.is_empty() { 1.0 } else { ok as f64 / log.rows.len() as f64 },
                max_excess: pairs.map(|(h, l)| h - l).fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect();
    let records: Vec<_> = log.rows.iter().filter_map(|r| r.solver).collect();
    Metrics {
        accumulated_total: tasks.iter().map(|t| t.accumulated_norm).sum(),
        tasks,
        ordering,
        solves: records.len(),
        total_iterations: records.iter().map(|r| r.iterations).sum(),
        total_solve_time: records.iter().map(|r| r.wall_time).sum(),
        max_solve_time: records.iter().map(|r| r.wall_time).fold(0.0, f64::max),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{self, Axis};
    use nalgebra::Vector3;

    fn pendulum_energy(m: &RobotModel, s: &PlantState) -> f64 {
        let terms = eval_dynamics(m, &s.q, &s.qd).unwrap();
        let kinetic = 0.5 * s.qd.dot(&(&terms.mass * &s.qd));
        // Rod of length 1 and mass 1: centre of mass 0.5 below the pivot at q = 0.
        let height = -0.5 * s.q[0].cos();
        kinetic + model::GRAVITY * height
    }

    #[test]
    fn pendulum_energy_is_conserved() {
        let m = model::pendulum();
        let zero = DVector::zeros(m.m());
        let mut s = PlantState::at_rest(DVector::from_vec(vec![1.0]));
        let e0 = pendulum_energy(&m, &s);
        for _ in 0..1000 {
            s = simulate_step(&m, &s, &zero, 1e-3, &SimSettings::default()).unwrap();
        }
        let e1 = pendulum_energy(&m, &s);
        assert!(((e1 - e0) / e0).abs() <= 1e-6, "{e0} -> {e1}");
    }

    #[test]
    fn gravity_compensated_equilibrium_is_fixed() {
        let m = model::two_link_arm();
        let q = DVector::from_vec(vec![0.4, -0.7]);
        let terms = eval_dynamics(&m, &q, &DVector::zeros(2)).unwrap();
        let s0 = PlantState::at_rest(q);
        let s1 = simulate_step(&m, &s0, &terms.gravity, 1e-3, &SimSettings::default()).unwrap();
        assert!((&s1.q - &s0.q).amax() <= 1e-10 && s1.qd.amax() <= 1e-10);
    }

    #[test]
    fn baumgarte_limits_constraint_drift() {
        let m = model::mini_scorpio_nl();
        let q0 = model::mini_scorpio_reference_q();
        let run = |settings: SimSettings| {
            let mut s = PlantState::at_rest(q0.clone());
            let mut drift: f64 = 0.0;
            for i in 0..80 {
                let gamma = DVector::from_vec(vec![(i as f64 * 0.37).sin() * 2.0, (i as f64 * 0.91).cos() * 1.5]);
                s = advance(&m, &s, &gamma, 0.01, &settings).unwrap();
                drift = drift.max(m.constraint_residual(&s.q).amax());
            }
            drift
        };
        let with = run(SimSettings::default());
        let without = run(SimSettings {
            baumgarte_alpha: 0.0,
            baumgarte_beta: 0.0,
            ..SimSettings::default()
        });
        assert!(with <= 1e-4, "{with}");
        assert!(with < without, "{with} vs {without}");
    }

    #[test]
    fn halving_the_step_converges() {
        let m = model::mini_scorpio();
        let s0 = PlantState::at_rest(model::mini_scorpio_reference_q());
        let gamma = DVector::from_vec(vec![-15.0, -4.0]);
        let coarse = SimSettings::default();
        let fine = SimSettings { dt_sim: 5e-4, ..coarse };
        let mut a = s0.clone();
        let mut b = s0;
        for _ in 0..20 {
            a = advance(&m, &a, &gamma, 0.01, &coarse).unwrap();
            b = advance(&m, &b, &gamma, 0.01, &fine).unwrap();
        }
        assert!((&a.q - &b.q).amax() <= 1e-6 && (&a.qd - &b.qd).amax() <= 1e-6);
    }

    #[test]
    fn dt_sim_must_divide_the_control_period() {
        let s = SimSettings { dt_sim: 3e-3, ..SimSettings::default() };
        assert!(s.validate(0.01).is_err());
        assert_eq!(SimSettings::default().validate(0.01).unwrap(), 10);
    }

    fn row(errors: &[f64]) -> LogRow {
        LogRow {
            t: 0.0,
            q: DVector::zeros(1),
            qd: DVector::zeros(1),
            torque: DVector::zeros(1),
            force: DVector::zeros(0),
            task_positions: vec![DVector::zeros(2)],
            task_desired: vec![DVector::zeros(2)],
            task_errors: vec![DVector::from_row_slice(errors)],
            error_norms: vec![DVector::from_row_slice(errors).norm()],
            solver: None,
        }
    }

    #[test]
    fn metrics_accumulate_norms() {
        let log = TrajectoryLog {
            task_names: vec!["a".into()],
            dt: 0.01,
            rows: (0..81).map(|_| row(&[0.1, 0.0])).collect(),
        };
        let m = metrics(&log);
        assert!((m.accumulated_total - 8.1).abs() < 1e-12);
        assert_eq!(m.tasks[0].max_abs_error, vec![0.1, 0.0]);
        assert!(m.ordering.is_empty());
        let zero = TrajectoryLog {
            task_names: vec!["a".into()],
            dt: 0.01,
            rows: (0..5).map(|_| row(&[0.0, 0.0])).collect(),
        };
        assert_eq!(metrics(&zero).accumulated_total, 0.0);
    }

    fn two_task_setup(horizon: &HorizonSpec) -> (RobotModel, Vec<TaskDef>, Vec<TaskTrajectory>, PlantState) {
        let m = model::mini_scorpio();
        let deg = std::f64::consts::PI / 180.0;
        let q0 = DVector::from_vec(vec![-90.0 * deg, 10.0 * deg, -10.0 * deg, 10.0 * deg]);
        let wrist = TaskDef::point("wrist", 3, Vector3::new(0.0, 0.0, -0.1), vec![Axis::X, Axis::Z], 40.0, 2.0, 1);
        let elbow = TaskDef::point("elbow", 1, Vector3::new(0.0, 0.0, -0.3), vec![Axis::X, Axis::Z], 40.0, 2.0, 2);
        let w0 = wrist.position(&m, &q0);
        let e0 = elbow.position(&m, &q0);
        let (t0, tf, n) = (horizon.t0, horizon.tf, horizon.n);
        let trajectories = vec![
            TaskTrajectory::linear(&w0, &(&w0 + DVector::from_vec(vec![-0.1, -0.1]) * (tf - t0) / 0.8), t0, tf, n),
            TaskTrajectory::linear(&e0, &(&e0 + DVector::from_vec(vec![0.1, 0.2]) * (tf - t0) / 0.8), t0, tf, n),
        ];
        (m, vec![wrist, elbow], trajectories, PlantState::at_rest(q0))
    }

    #[test]
    fn receding_horizon_bookkeeping() {
        let horizon = HorizonSpec { t0: 0.0, tf: 0.2, n: 20, np: 10, ne: 4 };
        let (m, tasks, trajs, x0) = two_task_setup(&horizon);
        let run = mpc_run(&m, &tasks, &trajs, &x0, &MpcConfig::new(horizon, 2)).unwrap();
        assert_eq!(run.inputs.len(), 20);
        assert_eq!(run.states.len(), 21);
        assert_eq!(run.log.len(), 21);
        assert_eq!(run.solves.len(), 5);
        for (k, r) in run.log.rows.iter().enumerate() {
            assert!((r.t - k as f64 * 0.01).abs() < 1e-12);
            assert_eq!(r.solver.is_some(), k % 4 == 0 && k < 20);
        }
        assert_eq!(run.states[0], vstack_vec(&[&x0.q, &x0.qd]));
    }

    #[test]
    fn single_window_matches_its_subproblem() {
        let horizon = HorizonSpec { t0: 0.0, tf: 0.1, n: 10, np: 10, ne: 10 };
        let (m, tasks, trajs, x0) = two_task_setup(&horizon);
        let config = MpcConfig::new(horizon, 2);
        let run = mpc_run(&m, &tasks, &trajs, &x0, &config).unwrap();
        assert_eq!(run.solves.len(), 1);
        let nominal = build_nominal(&m, &x0, &tasks, &trajs, &horizon, 0, &config.nominal).unwrap();
        let opts = TranscriptionOptions {
            hierarchy: config.hierarchy.clone(),
            force_weight: config.force_weight,
            hierarchy_constraints: true,
        };
        let xt = vstack_vec(&[&x0.q, &x0.qd]);
        let problem = transcribe(&m, &tasks, &trajs, &nominal, &xt, &horizon, &opts).unwrap();
        let warm = vstack_vec(&(0..10).map(|i| nominal.input(i)).collect::<Vec<_>>().iter().collect::<Vec<_>>());
        let sol = solve(&problem.condensed(), &config.solver, Some(&warm)).unwrap();
        let states = problem.states(&sol.z);
        for i in 0..10 {
            assert_eq!(run.inputs[i], sol.z.rows(i * 4, 4).into_owned());
        }
        for i in 0..=10 {
            assert_eq!(run.states[i], states.rows(i * 8, 8).into_owned());
        }
    }

    #[test]
    fn predicted_feedback_runs() {
        let horizon = HorizonSpec { t0: 0.0, tf: 0.2, n: 20, np: 10, ne: 4 };
        let (m, tasks, trajs, x0) = two_task_setup(&horizon);
        let config = MpcConfig {
            feedback: FeedbackMode::Predicted,
            ..MpcConfig::new(horizon, 2)
        };
        let run = mpc_run(&m, &tasks, &trajs, &x0, &config).unwrap();
        assert_eq!(run.log.len(), 21);
    }

    #[test]
    fn zero_gain_wbc_log_is_well_formed() {
        let horizon = HorizonSpec { t0: 0.0, tf: 0.1, n: 10, np: 10, ne: 10 };
        let (m, mut tasks, trajs, x0) = two_task_setup(&horizon);
        for t in &mut tasks {
            t.kp.fill(0.0);
            t.kv.fill(0.0);
        }
        let log = wbc_run(&m, &tasks, &trajs, &x0, &horizon, &SimSettings::default()).unwrap();
        assert_eq!(log.len(), 11);
        assert!(log.rows.iter().all(|r| r.q.iter().all(|v| v.is_finite())));
    }
}
