//! Projection-based whole-body control.
//!
//! For the constrained, underactuated dynamics
//! `M q̈ + bc = Ncᵀ Uᵀ Γ`, a task `x = f(q)` with Jacobian `J` obeys
//! `ẍ - J̇ q̇ + J M⁻¹ bc = 𝓜 Γ` with `𝓜 = J Nc M⁻¹ Uᵀ`. The single-task command
//! minimizes the actuator effort `Γᵀ Φ⁻¹ Γ` (with `Φ⁻¹ = U M⁻¹ Ncᵀ Uᵀ`)
//! subject to reaching the task target; the hierarchical command stacks
//! tasks through recursive dynamically consistent null-space projections.

use nalgebra::{DMatrix, DVector};

use crate::dynamics::{DynamicsTerms, PlantState};
use crate::error::{Error, Result};
use crate::linalg::{pinv, pinv_scaled, spectral_norm, sym};
use crate::model::RobotModel;
use crate::task::{TaskDef, pd_task_accel};

/// Tolerance on `‖ŪNc U Nc - Nc‖∞` for using the simplified task inertias.
pub const ACTUATION_CONDITION_TOL: f64 = 1e-6;

/// State-dependent quantities shared by every task at one control step.
#[derive(Debug, Clone)]
pub struct ActuationTerms {
    /// `W = Nc M⁻¹ = M⁻¹ Ncᵀ` (symmetrized).
    pub w: DMatrix<f64>,
    /// `Φ⁻¹ = U M⁻¹ Ncᵀ Uᵀ`.
    pub phi_inv: DMatrix<f64>,
    pub phi: DMatrix<f64>,
    /// `ŪNc = M⁻¹ Ncᵀ Uᵀ (U Nc M⁻¹ Ncᵀ Uᵀ)⁺` (n x m).
    pub unc_bar: DMatrix<f64>,
    /// `‖ŪNc U Nc - Nc‖∞`.
    pub condition_residual: f64,
    /// Whether the tasks are controllable through the actuated joints, so
    /// the simplified (symmetric) task inertias apply.
    pub condition_holds: bool,
    /// Realized joint-acceleration map of a joint-space force `h` fed through
    /// `Γ = ŪNcᵀ Ncᵀ h`: `q̈ = G h - M⁻¹ bc`. Equals `W` when the condition holds.
    pub g: DMatrix<f64>,
}

impl ActuationTerms {
    pub fn new(terms: &DynamicsTerms) -> Self {
        let u = &terms.u;
        let w = sym(&(&terms.nc * &terms.mass_inv));
        let phi_inv = sym(&(u * &w * u.transpose()));
        let phi = sym(&pinv(&phi_inv));
        let unc_bar = &w * u.transpose() * &phi;
        let unc = u * &terms.nc;
        let condition_residual = (&unc_bar * &unc - &terms.nc).amax();
        let g = &terms.mass_inv * terms.nc.transpose() * u.transpose() * unc_bar.transpose() * terms.nc.transpose();
        ActuationTerms {
            w,
            phi_inv,
            phi,
            unc_bar,
            condition_residual,
            condition_holds: condition_residual <= ACTUATION_CONDITION_TOL,
            g,
        }
    }

    /// `𝓜 = J Nc M⁻¹ Uᵀ`.
    pub fn task_map(&self, terms: &DynamicsTerms, j: &DMatrix<f64>) -> DMatrix<f64> {
        j * &self.w * terms.u.transpose()
    }

    /// Full task-space weighting `Λ = (𝓜 Φ 𝓜ᵀ)⁺`.
    pub fn task_inertia(&self, terms: &DynamicsTerms, j: &DMatrix<f64>) -> DMatrix<f64> {
        let m = self.task_map(terms, j);
        sym(&pinv(&sym(&(&m * &self.phi * m.transpose()))))
    }

    /// Constrained task inertia `Λ = (J Nc M⁻¹ Jᵀ)⁺`, equal to
    /// [`task_inertia`](Self::task_inertia) when the actuation condition holds.
    pub fn constrained_task_inertia(&self, j: &DMatrix<f64>) -> DMatrix<f64> {
        sym(&pinv(&sym(&(j * &self.w * j.transpose()))))
    }

    /// Whichever task inertia applies at this state.
    pub fn effective_task_inertia(&self, terms: &DynamicsTerms, j: &DMatrix<f64>) -> DMatrix<f64> {
        if self.condition_holds {
            self.constrained_task_inertia(j)
        } else {
            self.task_inertia(terms, j)
        }
    }
}

/// `𝐛 = ẍᵈ - J̇ q̇ + J M⁻¹ bc`.
pub fn task_bias(
    terms: &DynamicsTerms,
    j: &DMatrix<f64>,
    jdot_qd: &DVector<f64>,
    xdd_des: &DVector<f64>,
) -> DVector<f64> {
    xdd_des - jdot_qd + j * (&terms.mass_inv * &terms.bc)
}

/// Weighting matrix of the single-task objective, `(𝓜 Φ 𝓜ᵀ)⁺`.
pub fn task_inertia(terms: &DynamicsTerms, j: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if j.ncols() != terms.n() {
        return Err(Error::invalid(format!(
            "task Jacobian has {} columns, expected {}",
            j.ncols(),
            terms.n()
        )));
    }
    Ok(ActuationTerms::new(terms).task_inertia(terms, j))
}

/// Output of a WBC evaluation.
#[derive(Debug, Clone)]
pub struct HierarchicalCommand {
    /// Actuated torque `Γ*` (length m).
    pub torque: DVector<f64>,
    /// Per-task feed-forward forces `𝓕_k`.
    pub forces: Vec<DVector<f64>>,
    /// Per-task inertias used for `𝓕_k`.
    pub task_inertias: Vec<DMatrix<f64>>,
    /// Prioritized Jacobians `J_prec(k) = J_k N_{k-1}`.
    pub prioritized_jacobians: Vec<DMatrix<f64>>,
    /// Rank of each prioritized Jacobian's inertia (0: task fully blocked).
    pub projector_ranks: Vec<usize>,
    pub actuation_condition_holds: bool,
}

/// Closed-form single-task command `Γ* = Φ 𝓜ᵀ Λ 𝐛`.
pub fn single_task_torque(
    terms: &DynamicsTerms,
    act: &ActuationTerms,
    j: &DMatrix<f64>,
    jdot_qd: &DVector<f64>,
    xdd_des: &DVector<f64>,
) -> HierarchicalCommand {
    let b = task_bias(terms, j, jdot_qd, xdd_des);
    let m = act.task_map(terms, j);
    let lambda = act.effective_task_inertia(terms, j);
    let force = &lambda * &b;
    let torque = &act.phi * m.transpose() * &force;
    let rank = pinv_scaled(&(j * &act.w * j.transpose()), 0.0).rank;
    HierarchicalCommand {
        torque,
        forces: vec![force],
        task_inertias: vec![lambda],
        prioritized_jacobians: vec![j * &terms.nc],
        projector_ranks: vec![rank],
        actuation_condition_holds: act.condition_holds,
    }
}

/// Recursive hierarchical command.
///
/// Starting from `N_0 = Nc`, each task is projected into the null space of
/// all higher-priority tasks, `J_prec(k) = J_k N_{k-1}`, and its force
/// compensates the acceleration already induced by higher-priority forces so
/// that every feasible task reaches its target acceleration:
/// `𝓕_k = Λ_prec(k) (𝐛_k - J_k G Σ_{j<k} J_prec(j)ᵀ 𝓕_j)`.
pub fn hierarchy_torque(
    terms: &DynamicsTerms,
    act: &ActuationTerms,
    jacobians: &[DMatrix<f64>],
    jdot_qds: &[DVector<f64>],
    xdd_des: &[DVector<f64>],
) -> HierarchicalCommand {
    let n = terms.n();
    let mut null = terms.nc.clone();
    let mut h = DVector::zeros(n);
    let mut forces = Vec::with_capacity(jacobians.len());
    let mut inertias = Vec::with_capacity(jacobians.len());
    let mut jps = Vec::with_capacity(jacobians.len());
    let mut ranks = Vec::with_capacity(jacobians.len());
    for ((j, jdq), xdd) in jacobians.iter().zip(jdot_qds).zip(xdd_des) {
        let jp = j * &null;
        let scale = spectral_norm(&(j * &terms.mass_inv * j.transpose()));
        let inv_inertia = if act.condition_holds {
            sym(&(&jp * &terms.mass_inv * jp.transpose()))
        } else {
            j * &act.g * jp.transpose()
        };
        let p = pinv_scaled(&inv_inertia, scale);
        let lambda = p.matrix;
        let b = task_bias(terms, j, jdq, xdd) - j * (&act.g * &h);
        let force = &lambda * b;
        h += jp.transpose() * &force;

        null = next_projector(terms, &null, &jp, scale);

        forces.push(force);
        inertias.push(lambda);
        jps.push(jp);
        ranks.push(p.rank);
    }
    let torque = act.unc_bar.transpose() * terms.nc.transpose() * h;
    HierarchicalCommand {
        torque,
        forces,
        task_inertias: inertias,
        prioritized_jacobians: jps,
        projector_ranks: ranks,
        actuation_condition_holds: act.condition_holds,
    }
}

/// `N_k = N_{k-1} - J̄_prec J_prec` with `J̄_prec = M⁻¹ J_precᵀ (J_prec M⁻¹ J_precᵀ)⁺`.
fn next_projector(terms: &DynamicsTerms, null: &DMatrix<f64>, jp: &DMatrix<f64>, scale: f64) -> DMatrix<f64> {
    let inertia = pinv_scaled(&sym(&(jp * &terms.mass_inv * jp.transpose())), scale).matrix;
    let jp_bar = &terms.mass_inv * jp.transpose() * inertia;
    null - jp_bar * jp
}

/// Recursive null-space projectors `N_0 = Nc, …, N_{n_t}` for the given
/// task Jacobians.
pub fn null_space_projectors(terms: &DynamicsTerms, jacobians: &[DMatrix<f64>]) -> Vec<DMatrix<f64>> {
    let mut out = vec![terms.nc.clone()];
    for j in jacobians {
        let null = out.last().unwrap();
        let scale = spectral_norm(&(j * &terms.mass_inv * j.transpose()));
        let next = next_projector(terms, null, &(j * null), scale);
        out.push(next);
    }
    out
}

fn check_terms(model: &RobotModel, terms: &DynamicsTerms, state: &PlantState) -> Result<()> {
    if terms.n() != model.n() || state.q.len() != model.n() || state.qd.len() != model.n() {
        return Err(Error::invalid("dynamics terms, state and model dimensions disagree"));
    }
    Ok(())
}

/// Single-task WBC command for a desired task acceleration.
pub fn wbc_single_task(
    model: &RobotModel,
    terms: &DynamicsTerms,
    state: &PlantState,
    task: &TaskDef,
    xdd_des: &DVector<f64>,
) -> Result<HierarchicalCommand> {
    check_terms(model, terms, state)?;
    task.validate(model)?;
    if xdd_des.len() != task.dim() {
        return Err(Error::invalid(format!(
            "task '{}': desired acceleration has {} entries, expected {}",
            task.name,
            xdd_des.len(),
            task.dim()
        )));
    }
    let act = ActuationTerms::new(terms);
    let j = task.jacobian(model, &state.q);
    let jdq = task.jacobian_dot_qd(model, &state.q, &state.qd);
    Ok(single_task_torque(terms, &act, &j, &jdq, xdd_des))
}

/// Hierarchical WBC command; `tasks` must be ordered by priority.
pub fn wbc_hierarchy(
    model: &RobotModel,
    terms: &DynamicsTerms,
    state: &PlantState,
    tasks: &[TaskDef],
    xdd_des: &[DVector<f64>],
) -> Result<HierarchicalCommand> {
    check_terms(model, terms, state)?;
    if tasks.len() != xdd_des.len() {
        return Err(Error::invalid("one desired acceleration per task is required"));
    }
    for (t, a) in tasks.iter().zip(xdd_des) {
        t.validate(model)?;
        if a.len() != t.dim() {
            return Err(Error::invalid(format!(
                "task '{}': desired acceleration has {} entries, expected {}",
                t.name,
                a.len(),
                t.dim()
            )));
        }
    }
    let act = ActuationTerms::new(terms);
    let jacs: Vec<_> = tasks.iter().map(|t| t.jacobian(model, &state.q)).collect();
    let jdqs: Vec<_> = tasks
        .iter()
        .map(|t| t.jacobian_dot_qd(model, &state.q, &state.qd))
        .collect();
    Ok(hierarchy_torque(terms, &act, &jacs, &jdqs, xdd_des))
}

/// PD targets for every task at a state given desired positions and velocities.
pub fn pd_targets(
    model: &RobotModel,
    state: &PlantState,
    tasks: &[TaskDef],
    x_des: &[DVector<f64>],
    xd_des: &[DVector<f64>],
) -> Vec<DVector<f64>> {
    tasks
        .iter()
        .zip(x_des.iter().zip(xd_des))
        .map(|(t, (xd, vd))| {
            let x = t.position(model, &state.q);
            let v = t.jacobian(model, &state.q) * &state.qd;
            pd_task_accel(t, xd, vd, &x, &v)
        })
        .collect()
}
