//! Nominal state and input trajectories from prioritized inverse kinematics
//! and the hierarchical WBC law.

use nalgebra::{DMatrix, DVector};

use crate::dynamics::{eval_dynamics, PlantState};
use crate::error::{Error, Result};
use crate::linalg::{damped_pinv, pinv_scaled, spectral_norm};
use crate::model::RobotModel;
use crate::task::TaskDef;
use crate::transcription::HorizonSpec;
use crate::wbc;

/// Smallest retained singular value below which the IK switches to damped
/// least squares.
pub const IK_SINGULAR_THRESHOLD: f64 = 1e-6;
pub const IK_DAMPING: f64 = 1e-4;
/// Default bound on the joint increment of one IK step (rad).
pub const DEFAULT_DIVERGENCE_BOUND: f64 = 1.0;

/// Desired positions (and velocities) of one task on the global time grid
/// `t_0 .. t_N`. Samples past the end are held at the final position with
/// zero velocity.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskTrajectory {
    pub positions: Vec<DVector<f64>>,
    pub velocities: Vec<DVector<f64>>,
}

impl TaskTrajectory {
    /// Straight-line interpolation from `start` to `end` over `[t0, tf]`
    /// sampled at `n + 1` points.
    pub fn linear(start: &DVector<f64>, end: &DVector<f64>, t0: f64, tf: f64, n: usize) -> Self {
        let slope = (end - start) / (tf - t0);
        let positions = (0..=n)
            .map(|i| {
                let s = i as f64 / n as f64;
                start * (1.0 - s) + end * s
            })
            .collect();
        TaskTrajectory {
            positions,
            velocities: vec![slope; n + 1],
        }
    }

    /// Constant target with zero velocity.
    pub fn constant(x: &DVector<f64>, n: usize) -> Self {
        TaskTrajectory {
            positions: vec![x.clone(); n + 1],
            velocities: vec![DVector::zeros(x.len()); n + 1],
        }
    }

    pub fn dim(&self) -> usize {
        self.positions.first().map_or(0, |p| p.len())
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn position(&self, i: usize) -> &DVector<f64> {
        &self.positions[i.min(self.positions.len() - 1)]
    }

    pub fn velocity(&self, i: usize) -> DVector<f64> {
        if i < self.velocities.len() {
            self.velocities[i].clone()
        } else {
            DVector::zeros(self.dim())
        }
    }

    pub fn validate(&self, task: &TaskDef, n: usize) -> Result<()> {
        if self.positions.len() != n + 1 || self.velocities.len() != n + 1 {
            return Err(Error::invalid(format!(
                "trajectory for task '{}': expected {} samples, found {}",
                task.name,
                n + 1,
                self.positions.len()
            )));
        }
        for (p, v) in self.positions.iter().zip(&self.velocities) {
            if p.len() != task.dim() || v.len() != task.dim() {
                return Err(Error::invalid(format!(
                    "trajectory for task '{}': samples must have {} entries",
                    task.name,
                    task.dim()
                )));
            }
            if p.iter().chain(v.iter()).any(|x| !x.is_finite()) {
                return Err(Error::invalid(format!(
                    "trajectory for task '{}': non-finite sample",
                    task.name
                )));
            }
        }
        Ok(())
    }
}

/// Nominal trajectory over one prediction window of `Np` steps.
#[derive(Debug, Clone)]
pub struct NominalTrajectory {
    /// Global index of the window's first step.
    pub start: usize,
    pub q: Vec<DVector<f64>>,
    pub qd: Vec<DVector<f64>>,
    /// Nominal torques `Γᵈ_i`, i in [0, Np).
    pub torque: Vec<DVector<f64>>,
    /// Nominal constraint forces `F_cᵈ_i`, i in [0, Np).
    pub force: Vec<DVector<f64>>,
}

impl NominalTrajectory {
    pub fn steps(&self) -> usize {
        self.q.len() - 1
    }

    pub fn state(&self, i: usize) -> DVector<f64> {
        let n = self.q[i].len();
        let mut x = DVector::zeros(2 * n);
        x.rows_mut(0, n).copy_from(&self.q[i]);
        x.rows_mut(n, n).copy_from(&self.qd[i]);
        x
    }

    pub fn input(&self, i: usize) -> DVector<f64> {
        let (m, nc) = (self.torque[i].len(), self.force[i].len());
        let mut u = DVector::zeros(m + nc);
        u.rows_mut(0, m).copy_from(&self.torque[i]);
        u.rows_mut(m, nc).copy_from(&self.force[i]);
        u
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NominalOptions {
    /// Maximum `‖𝓠_i‖` before the IK is declared divergent.
    pub divergence_bound: f64,
    /// Track `f_c(q) = c` as a top-priority IK task.
    pub constraint_task: bool,
}

impl Default for NominalOptions {
    fn default() -> Self {
        NominalOptions {
            divergence_bound: DEFAULT_DIVERGENCE_BOUND,
            constraint_task: true,
        }
    }
}

fn ik_inverse(jp: &DMatrix<f64>, scale: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let p = pinv_scaled(jp, scale);
    let step = if p.rank > 0 && p.smallest_retained < IK_SINGULAR_THRESHOLD {
        damped_pinv(jp, IK_DAMPING)
    } else {
        p.matrix.clone()
    };
    (step, p.matrix)
}

/// One prioritized IK step:
/// `Δq_k = (J_k P_{k-1})⁺ (Δx_k - J_k Σ_{j<k} Δq_j)`,
/// `P_k = P_{k-1} - (J_k P_{k-1})⁺ (J_k P_{k-1})`, `P_0 = I`.
/// Returns `𝓠 = Σ_k Δq_k`.
pub fn prioritized_ik_step(jacobians: &[DMatrix<f64>], deltas: &[DVector<f64>]) -> DVector<f64> {
    let n = jacobians.first().map_or(0, |j| j.ncols());
    let mut p = DMatrix::identity(n, n);
    let mut total = DVector::zeros(n);
    for (j, dx) in jacobians.iter().zip(deltas) {
        let jp = j * &p;
        let scale = spectral_norm(j);
        let (step_inv, proj_inv) = ik_inverse(&jp, scale);
        total += &step_inv * (dx - j * &total);
        p -= proj_inv * jp;
    }
    total
}

/// Builds the nominal trajectory for the prediction window that starts at
/// global step `start` from the measured state `x0`.
///
/// The IK follows the desired increments from the measured start,
/// `f_k(q_{i+1}ᵈ) = f_k(q_0) + x_kᵈ(t_{i+1}) - x_kᵈ(t_0)`, re-linearized at each
/// step so the nominal neither accumulates linearization drift nor jumps to
/// close the measured tracking error within one step. Velocities are the
/// backward differences `q̇_{i+1}ᵈ = (q_{i+1}ᵈ - q_iᵈ) / Δt`, and inputs come
/// from the hierarchical WBC law with PD targets evaluated at each nominal
/// state.
pub fn build_nominal(
    model: &RobotModel,
    x0: &PlantState,
    tasks: &[TaskDef],
    trajectories: &[TaskTrajectory],
    horizon: &HorizonSpec,
    start: usize,
    options: &NominalOptions,
) -> Result<NominalTrajectory> {
    horizon.validate()?;
    if tasks.len() != trajectories.len() {
        return Err(Error::invalid("one trajectory per task is required"));
    }
    for (t, tr) in tasks.iter().zip(trajectories) {
        tr.validate(t, horizon.n)?;
    }
    let n = model.n();
    if x0.q.len() != n || x0.qd.len() != n {
        return Err(Error::invalid("initial state dimension does not match the model"));
    }
    let dt = horizon.dt();
    let np = horizon.np;

    let anchors: Vec<DVector<f64>> = tasks
        .iter()
        .zip(trajectories)
        .map(|(t, tr)| t.position(model, &x0.q) - tr.position(start))
        .collect();
    let mut qs = vec![x0.q.clone()];
    let mut qds = vec![x0.qd.clone()];
    for i in 0..np {
        let q = &qs[i];
        let mut jacs = Vec::with_capacity(tasks.len() + 1);
        let mut deltas = Vec::with_capacity(tasks.len() + 1);
        if options.constraint_task && model.nc() > 0 {
            jacs.push(model.constraint_jacobian(q));
            deltas.push(-model.constraint_residual(q));
        }
        for ((t, tr), anchor) in tasks.iter().zip(trajectories).zip(&anchors) {
            jacs.push(t.jacobian(model, q));
            deltas.push(tr.position(start + i + 1) + anchor - t.position(model, q));
        }
        let dq = prioritized_ik_step(&jacs, &deltas);
        let norm = dq.norm();
        if !(norm <= options.divergence_bound) {
            return Err(Error::NominalInfeasible {
                step: start + i,
                norm,
                bound: options.divergence_bound,
            });
        }
        qs.push(q + &dq);
        qds.push(dq / dt);
    }

    let mut torque = Vec::with_capacity(np);
    let mut force = Vec::with_capacity(np);
    for i in 0..np {
        let state = PlantState::new(qs[i].clone(), qds[i].clone());
        let terms = eval_dynamics(model, &state.q, &state.qd)?;
        let x_des: Vec<_> = trajectories.iter().map(|tr| tr.position(start + i).clone()).collect();
        let xd_des: Vec<_> = trajectories.iter().map(|tr| tr.velocity(start + i)).collect();
        let xdd = wbc::pd_targets(model, &state, tasks, &x_des, &xd_des);
        let cmd = wbc::wbc_hierarchy(model, &terms, &state, tasks, &xdd)?;
        force.push(terms.constraint_force(&cmd.torque));
        torque.push(cmd.torque);
    }
    Ok(NominalTrajectory {
        start,
        q: qs,
        qd: qds,
        torque,
        force,
    })
}
