//! Transcription of the hierarchical tracking problem into a finite-horizon
//! QCQP: linearization and discretization along the nominal, stacked
//! prediction, quadratic cost, quadratic hierarchy inequalities and
//! linearized kinematic equalities.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::eval_dynamics;
use crate::error::{Error, Result};
use crate::linalg::{psd_project, sym, vstack_vec};
use crate::model::RobotModel;
use crate::nominal::{NominalTrajectory, TaskTrajectory};
use crate::qcqp::{QuadConstraint, Qcqp};
use crate::task::TaskDef;
use crate::wbc::ActuationTerms;

/// Time grid of a closed-loop run and its receding-horizon windows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HorizonSpec {
    pub t0: f64,
    pub tf: f64,
    /// Total number of control steps.
    pub n: usize,
    /// Prediction steps per subproblem.
    pub np: usize,
    /// Execution steps committed per subproblem.
    pub ne: usize,
}

impl HorizonSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.tf > self.t0) || !self.t0.is_finite() || !self.tf.is_finite() {
            return Err(Error::invalid(format!(
                "horizon: tf ({}) must exceed t0 ({})",
                self.tf, self.t0
            )));
        }
        if self.n == 0 {
            return Err(Error::invalid("horizon.n: must be positive"));
        }
        if self.ne == 0 || self.ne > self.np || self.np > self.n {
            return Err(Error::invalid(format!(
                "horizon: require 0 < Ne <= Np <= N (Ne = {}, Np = {}, N = {})",
                self.ne, self.np, self.n
            )));
        }
        if !self.n.is_multiple_of(self.ne) {
            return Err(Error::invalid(format!(
                "horizon: N = {} is not divisible by Ne = {} ({} mod {} = {})",
                self.n,
                self.ne,
                self.n,
                self.ne,
                self.n % self.ne
            )));
        }
        Ok(())
    }

    /// Control period `Δt = (tf - t0) / N`.
    pub fn dt(&self) -> f64 {
        (self.tf - self.t0) / self.n as f64
    }

    /// Dilation coefficient of one prediction window, `σ = Np Δt`.
    pub fn sigma(&self) -> f64 {
        self.np as f64 * self.dt()
    }

    /// Normalized-time step `Δτ = 1 / Np`.
    pub fn dtau(&self) -> f64 {
        1.0 / self.np as f64
    }

    pub fn subproblems(&self) -> usize {
        self.n / self.ne
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt()
    }
}

// ---------------------------------------------------------------------------
// Dynamics in state-space form

/// First prediction step at which the kinematic equalities and hierarchy
/// inequalities bind. Under the explicit-Euler discretization the position
/// part of `x_1` depends only on the measured `x_0`, so constraining it would
/// make the subproblem infeasible whenever the plant has drifted.
pub const FIRST_BOUND_STEP: usize = 2;

/// Default weight on the constraint-force inputs.
pub const DEFAULT_FORCE_WEIGHT: f64 = 1e-2;

fn split_state(x: &DVector<f64>, n: usize) -> (DVector<f64>, DVector<f64>) {
    (x.rows(0, n).into_owned(), x.rows(n, n).into_owned())
}

/// `F(x, u) = [q̇; M⁻¹ (Uᵀ Γ - b - Jcᵀ F_c)]` with `x = [q; q̇]`, `u = [Γ; F_c]`.
pub fn state_derivative(model: &RobotModel, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
    let n = model.n();
    let (m, nc) = (model.m(), model.nc());
    if x.len() != 2 * n || u.len() != m + nc {
        return Err(Error::invalid("state/input dimension mismatch"));
    }
    let (q, qd) = split_state(x, n);
    let t = eval_dynamics(model, &q, &qd)?;
    let gamma = u.rows(0, m).into_owned();
    let force = u.rows(m, nc).into_owned();
    let qdd = t.forward_dynamics_with_force(&gamma, &force);
    Ok(vstack_vec(&[&qd, &qdd]))
}

/// Continuous-time linearization in normalized time:
/// `dx/dτ ≈ A x + B u + r`.
#[derive(Debug, Clone)]
pub struct ContinuousLinearization {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub r: DVector<f64>,
}

/// Discrete step `x_{i+1} = A x_i + B u_i + r`.
#[derive(Debug, Clone)]
pub struct LinearizedStep {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub r: DVector<f64>,
}

/// Step of the five-point stencil used for the configuration derivatives.
pub const LINEARIZATION_STEP: f64 = 1e-3;

/// Linearizes `σ F(x, u)` about `(x, u)`.
///
/// The input map is exact (`B = σ g(x)`). Configuration derivatives use a
/// fourth-order five-point stencil; velocity derivatives use a central
/// difference with unit step, which is exact because `F` is quadratic in `q̇`.
pub fn linearize_step(model: &RobotModel, x: &DVector<f64>, u: &DVector<f64>, sigma: f64) -> Result<ContinuousLinearization> {
    let n = model.n();
    let (m, nc) = (model.m(), model.nc());
    let nx = 2 * n;
    let f0 = state_derivative(model, x, u)?;
    let mut a = DMatrix::zeros(nx, nx);
    let h = LINEARIZATION_STEP;
    for j in 0..n {
        let shifted = |s: f64| -> Result<DVector<f64>> {
            let mut xs = x.clone();
            xs[j] += s;
            state_derivative(model, &xs, u)
        };
        let d = (shifted(-2.0 * h)? - shifted(2.0 * h)? + (shifted(h)? - shifted(-h)?) * 8.0) / (12.0 * h);
        a.set_column(j, &d);
    }
    for j in 0..n {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[n + j] += 1.0;
        xm[n + j] -= 1.0;
        let d = (state_derivative(model, &xp, u)? - state_derivative(model, &xm, u)?) * 0.5;
        a.set_column(n + j, &d);
    }
    a *= sigma;

    let (q, qd) = split_state(x, n);
    let t = eval_dynamics(model, &q, &qd)?;
    let mut b = DMatrix::zeros(nx, m + nc);
    b.view_mut((n, 0), (n, m)).copy_from(&(&t.mass_inv * t.u.transpose() * sigma));
    b.view_mut((n, m), (n, nc)).copy_from(&(&t.mass_inv * t.jc.transpose() * -sigma));

    let r = &f0 * sigma - &a * x - &b * u;
    if a.iter().chain(b.iter()).chain(r.iter()).any(|v| !v.is_finite()) {
        return Err(Error::numerical("non-finite linearization"));
    }
    Ok(ContinuousLinearization { a, b, r })
}

/// Explicit-Euler discretization in normalized time:
/// `A = I + A_τ Δτ`, `B = B_τ Δτ`, `r = r_τ Δτ`.
pub fn discretize(lin: &ContinuousLinearization, dtau: f64) -> LinearizedStep {
    let nx = lin.a.nrows();
    LinearizedStep {
        a: DMatrix::identity(nx, nx) + &lin.a * dtau,
        b: &lin.b * dtau,
        r: &lin.r * dtau,
    }
}

/// `𝒳 = 𝒜 x_0 + ℬ 𝒰 + ℛ` over `Np` steps (`ℛ` already summed).
#[derive(Debug, Clone)]
pub struct StackedPrediction {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub r: DVector<f64>,
    pub nx: usize,
    pub nu: usize,
    pub np: usize,
}

impl StackedPrediction {
    pub fn predict(&self, x0: &DVector<f64>, inputs: &DVector<f64>) -> DVector<f64> {
        &self.a * x0 + &self.b * inputs + &self.r
    }

    /// Affine map `𝒳 = S 𝒰 + s` for a fixed initial state.
    pub fn affine(&self, x0: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>) {
        (self.b.clone(), &self.a * x0 + &self.r)
    }
}

/// Stacks `Np` discrete steps into the block lower-triangular prediction.
pub fn stack_prediction(steps: &[LinearizedStep]) -> Result<StackedPrediction> {
    let np = steps.len();
    if np == 0 {
        return Err(Error::invalid("stack_prediction: no steps"));
    }
    let nx = steps[0].a.nrows();
    let nu = steps[0].b.ncols();
    for (i, s) in steps.iter().enumerate() {
        if s.a.shape() != (nx, nx) || s.b.shape() != (nx, nu) || s.r.len() != nx {
            return Err(Error::invalid(format!("stack_prediction: step {i} has inconsistent dimensions")));
        }
    }
    let mut a = DMatrix::zeros((np + 1) * nx, nx);
    let mut b = DMatrix::zeros((np + 1) * nx, np * nu);
    let mut r = DVector::zeros((np + 1) * nx);
    a.view_mut((0, 0), (nx, nx)).fill_with_identity();
    for (i, s) in steps.iter().enumerate().take(np) {
        let (row, next) = (i * nx, (i + 1) * nx);
        let a_prev = a.view((row, 0), (nx, nx)).into_owned();
        a.view_mut((next, 0), (nx, nx)).copy_from(&(&s.a * a_prev));
        let b_prev = b.view((row, 0), (nx, np * nu)).into_owned();
        let mut b_next = &s.a * b_prev;
        b_next.view_mut((0, i * nu), (nx, nu)).copy_from(&s.b);
        b.view_mut((next, 0), (nx, np * nu)).copy_from(&b_next);
        let r_prev = r.rows(row, nx).into_owned();
        r.rows_mut(next, nx).copy_from(&(&s.a * r_prev + &s.r));
    }
    Ok(StackedPrediction { a, b, r, nx, nu, np })
}

/// Linearizes and discretizes the dynamics at every nominal step.
pub fn linearize_along(model: &RobotModel, nominal: &NominalTrajectory, horizon: &HorizonSpec) -> Result<Vec<LinearizedStep>> {
    (0..nominal.steps())
        .map(|i| {
            linearize_step(model, &nominal.state(i), &nominal.input(i), horizon.sigma())
                .map(|lin| discretize(&lin, horizon.dtau()))
                .map_err(|e| match e {
                    Error::NumericalFailure(msg) => Error::numerical(format!("step {}: {msg}", nominal.start + i)),
                    other => other,
                })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Hierarchy inequalities

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HierarchyMode {
    Weak,
    Strong,
}

/// Treatment of the generally indefinite `J_kᵀJ_k - J_{k+1}ᵀJ_{k+1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Convexification {
    /// Clip negative eigenvalues (convex program).
    Psd,
    /// Keep the indefinite block (requires the nonconvex-local solver mode).
    Raw,
}

/// Which error the ordering constraint linearizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HierarchyForm {
    /// Assumes the nominal tracks every task exactly:
    /// `(q - qᵈ)ᵀ 𝓙 (q - qᵈ) + margin <= 0`.
    ZeroError,
    /// Includes the nominal task errors `e_k = x_kᵈ - f_k(qᵈ)`:
    /// `‖e_k - J_k δ‖² - ‖e_{k+1} - J_{k+1} δ‖² + margin <= 0`, `δ = q - qᵈ`,
    /// with the quadratic part convexified.
    TrackingError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchySpec {
    pub mode: HierarchyMode,
    /// `ε_1 <= ε_2 <= … ` per task (all zero in weak mode).
    pub epsilons: Vec<f64>,
    pub convexification: Convexification,
    pub form: HierarchyForm,
}

impl HierarchySpec {
    pub fn weak(n_tasks: usize) -> Self {
        HierarchySpec {
            mode: HierarchyMode::Weak,
            epsilons: vec![0.0; n_tasks],
            convexification: Convexification::Psd,
            form: HierarchyForm::TrackingError,
        }
    }

    pub fn validate(&self, n_tasks: usize) -> Result<()> {
        if self.epsilons.len() != n_tasks {
            return Err(Error::invalid(format!(
                "hierarchy.epsilons: expected {n_tasks} values, found {}",
                self.epsilons.len()
            )));
        }
        if self.epsilons.iter().any(|e| !(*e >= 0.0) || !e.is_finite()) {
            return Err(Error::invalid("hierarchy.epsilons: values must be nonnegative"));
        }
        for w in self.epsilons.windows(2) {
            if w[1] < w[0] {
                return Err(Error::invalid("hierarchy.epsilons: values must be nondecreasing"));
            }
        }
        match self.mode {
            HierarchyMode::Weak => {
                if self.epsilons.windows(2).any(|w| w[0] != w[1]) {
                    return Err(Error::invalid("hierarchy: weak mode requires equal epsilons (zero margins)"));
                }
            }
            HierarchyMode::Strong => {
                if self.epsilons.windows(2).any(|w| !(w[0] < w[1])) {
                    return Err(Error::invalid("hierarchy: strong mode requires strictly increasing epsilons"));
                }
            }
        }
        Ok(())
    }

    /// `ε_{k(k+1)} = ε_k - ε_{k+1}` for each consecutive pair (<= 0).
    pub fn pair_margins(&self) -> Vec<f64> {
        self.epsilons.windows(2).map(|w| w[0] - w[1]).collect()
    }

    /// Offset added to each pairwise constraint. A strong hierarchy demands
    /// `‖e_k‖² <= ‖e_{k+1}‖² - |ε_{k(k+1)}|`, i.e. a positive offset.
    pub fn constraint_offsets(&self) -> Vec<f64> {
        self.pair_margins().iter().map(|m| m.abs()).collect()
    }
}

/// One ordering constraint on the configuration `q_i` of prediction step
/// `step`: `qᵀ P q + zᵀ q + e <= 0`.
#[derive(Debug, Clone)]
pub struct HierarchyIneq {
    pub step: usize,
    /// Index of the higher-priority task of the pair (0-based).
    pub task: usize,
    pub p: DMatrix<f64>,
    pub z: DVector<f64>,
    pub e: f64,
    /// Minimum eigenvalue of the raw `J_kᵀJ_k - J_{k+1}ᵀJ_{k+1}`.
    pub raw_min_eigenvalue: f64,
}

impl HierarchyIneq {
    pub fn eval(&self, q: &DVector<f64>) -> f64 {
        q.dot(&(&self.p * q)) + self.z.dot(q) + self.e
    }
}

fn check_lengths(tasks: &[TaskDef], trajectories: &[TaskTrajectory]) -> Result<()> {
    if tasks.len() != trajectories.len() {
        return Err(Error::invalid("one trajectory per task is required"));
    }
    for (t, tr) in tasks.iter().zip(trajectories) {
        if tr.dim() != t.dim() {
            return Err(Error::invalid(format!("trajectory for task '{}' has the wrong dimension", t.name)));
        }
    }
    Ok(())
}

/// Pairwise ordering constraints `‖e_k‖² + ε_k <= ‖e_{k+1}‖² + ε_{k+1}`
/// linearized at the nominal, for steps `FIRST_BOUND_STEP..=Np`.
pub fn hierarchy_constraints(
    model: &RobotModel,
    tasks: &[TaskDef],
    trajectories: &[TaskTrajectory],
    nominal: &NominalTrajectory,
    spec: &HierarchySpec,
) -> Result<Vec<HierarchyIneq>> {
    check_lengths(tasks, trajectories)?;
    spec.validate(tasks.len())?;
    let offsets = spec.constraint_offsets();
    let mut out = Vec::new();
    for i in FIRST_BOUND_STEP..=nominal.steps() {
        let qd = &nominal.q[i];
        let jacs: Vec<_> = tasks.iter().map(|t| t.jacobian(model, qd)).collect();
        let errs: Vec<_> = tasks
            .iter()
            .zip(trajectories)
            .map(|(t, tr)| tr.position(nominal.start + i) - t.position(model, qd))
            .collect();
        for k in 0..tasks.len().saturating_sub(1) {
            let raw = sym(&(jacs[k].transpose() * &jacs[k] - jacs[k + 1].transpose() * &jacs[k + 1]));
            let raw_min = crate::linalg::min_eigenvalue(&raw);
            let p = match spec.convexification {
                Convexification::Psd => psd_project(&raw),
                Convexification::Raw => raw,
            };
            let pq = &p * qd;
            let mut z = &pq * -2.0;
            let mut e = qd.dot(&pq) + offsets[k];
            if spec.form == HierarchyForm::TrackingError {
                let l = jacs[k].tr_mul(&errs[k]) - jacs[k + 1].tr_mul(&errs[k + 1]);
                z -= &l * 2.0;
                e += 2.0 * l.dot(qd) + errs[k].norm_squared() - errs[k + 1].norm_squared();
            }
            out.push(HierarchyIneq {
                step: i,
                task: k,
                p,
                z,
                e,
                raw_min_eigenvalue: raw_min,
            });
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Kinematic equalities

/// Linearized holonomic constraint at prediction step `step`:
/// `a q_i + b = 0`.
#[derive(Debug, Clone)]
pub struct KinematicRows {
    pub step: usize,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

/// First-order expansion `f_c(qᵈ) + Jc(qᵈ) (q - qᵈ) = c` at each bound step.
pub fn kinematic_equalities(model: &RobotModel, nominal: &NominalTrajectory) -> Vec<KinematicRows> {
    if model.nc() == 0 {
        return Vec::new();
    }
    (FIRST_BOUND_STEP..=nominal.steps())
        .map(|i| {
            let qd = &nominal.q[i];
            let jc = model.constraint_jacobian(qd);
            let b = model.constraint_residual(qd) - &jc * qd;
            KinematicRows { step: i, a: jc, b }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Quadratic cost

/// Quadratic cost of one prediction step:
/// `xᵀ W_xx x + W_x x + uᵀ W_uu u + W_u u`.
#[derive(Debug, Clone)]
pub struct StepCost {
    pub wxx: DMatrix<f64>,
    pub wx: DVector<f64>,
    pub wuu: DMatrix<f64>,
    pub wu: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct CostTerms {
    /// Running cost for steps `0..Np`.
    pub running: Vec<StepCost>,
    /// Terminal state cost at step `Np` (`wuu`, `wu` empty).
    pub terminal: StepCost,
}

/// Stacked task quantities of one nominal state used by the cost.
struct StackedTask {
    j: DMatrix<f64>,
    kp: DVector<f64>,
    kv: DVector<f64>,
    x_des: DVector<f64>,
    xd_des: DVector<f64>,
    x: DVector<f64>,
    jdot_qd: DVector<f64>,
}

fn stacked_task(model: &RobotModel, tasks: &[TaskDef], trajectories: &[TaskTrajectory], q: &DVector<f64>, qd: &DVector<f64>, index: usize) -> StackedTask {
    let n = model.n();
    let jacs: Vec<_> = tasks.iter().map(|t| t.jacobian(model, q)).collect();
    let refs: Vec<&DMatrix<f64>> = jacs.iter().collect();
    let cat = |v: Vec<DVector<f64>>| -> DVector<f64> {
        let r: Vec<&DVector<f64>> = v.iter().collect();
        vstack_vec(&r)
    };
    StackedTask {
        j: crate::linalg::vstack(&refs, n),
        kp: cat(tasks.iter().map(|t| t.kp.clone()).collect()),
        kv: cat(tasks.iter().map(|t| t.kv.clone()).collect()),
        x_des: cat(trajectories.iter().map(|tr| tr.position(index).clone()).collect()),
        xd_des: cat(trajectories.iter().map(|tr| tr.velocity(index)).collect()),
        x: cat(tasks.iter().map(|t| t.position(model, q)).collect()),
        jdot_qd: cat(tasks.iter().map(|t| t.jacobian_dot_qd(model, q, qd)).collect()),
    }
}

/// Per-step weights from the stacked-task WBC objective
/// `(𝓜 Γ - 𝐛)ᵀ Λ (𝓜 Γ - 𝐛) + F_cᵀ W_c F_c`, with the PD-driven `𝐛`
/// linearized in the state, `𝐛 ≈ C x + c`:
/// `C = [-Kp J, -Kv J]`, `c = Kp (xᵈ - f(qᵈ) + J qᵈ) + Kv ẋᵈ`.
pub fn quadratic_cost(
    model: &RobotModel,
    tasks: &[TaskDef],
    trajectories: &[TaskTrajectory],
    nominal: &NominalTrajectory,
    force_weight: f64,
) -> Result<CostTerms> {
    check_lengths(tasks, trajectories)?;
    if !(force_weight >= 0.0) {
        return Err(Error::invalid("constraint-force weight must be nonnegative"));
    }
    let n = model.n();
    let (m, nc) = (model.m(), model.nc());
    let np = nominal.steps();
    let mut running = Vec::with_capacity(np);
    let mut terminal = None;
    for i in 0..=np {
        let (q, qd) = (&nominal.q[i], &nominal.qd[i]);
        let terms = eval_dynamics(model, q, qd)?;
        let act = ActuationTerms::new(&terms);
        let st = stacked_task(model, tasks, trajectories, q, qd, nominal.start + i);
        let lambda = act.effective_task_inertia(&terms, &st.j);

        let kpj = DMatrix::from_diagonal(&st.kp) * &st.j;
        let kvj = DMatrix::from_diagonal(&st.kv) * &st.j;
        let mut c_mat = DMatrix::zeros(st.j.nrows(), 2 * n);
        c_mat.view_mut((0, 0), (st.j.nrows(), n)).copy_from(&(-&kpj));
        c_mat.view_mut((0, n), (st.j.nrows(), n)).copy_from(&(-&kvj));
        let c_vec = st.kp.component_mul(&(&st.x_des - &st.x)) + &kpj * q + st.kv.component_mul(&st.xd_des);
        let wxx = psd_project(&(c_mat.transpose() * &lambda * &c_mat));
        let wx = (c_mat.transpose() * &lambda * &c_vec) * 2.0;

        if i == np {
            terminal = Some(StepCost {
                wxx,
                wx,
                wuu: DMatrix::zeros(0, 0),
                wu: DVector::zeros(0),
            });
            break;
        }
        let mm = act.task_map(&terms, &st.j);
        let mut wuu = DMatrix::zeros(m + nc, m + nc);
        wuu.view_mut((0, 0), (m, m)).copy_from(&psd_project(&(mm.transpose() * &lambda * &mm)));
        for k in 0..nc {
            wuu[(m + k, m + k)] = force_weight;
        }
        // Full 𝐛 at the nominal state with the PD target evaluated there.
        let xdd = st.kp.component_mul(&(&st.x_des - &st.x)) + st.kv.component_mul(&(&st.xd_des - &st.j * qd));
        let b_nom = xdd - &st.jdot_qd + &st.j * (&terms.mass_inv * &terms.bc);
        let mut wu = DVector::zeros(m + nc);
        wu.rows_mut(0, m).copy_from(&((mm.transpose() * &lambda * &b_nom) * -2.0));
        running.push(StepCost { wxx, wx, wuu, wu });
    }
    Ok(CostTerms {
        running,
        terminal: terminal.expect("terminal step"),
    })
}

// ---------------------------------------------------------------------------
// Assembly

/// The finite-horizon QCQP over `(𝒳, 𝒰)`.
#[derive(Debug, Clone)]
pub struct QcqpProblem {
    pub nx: usize,
    pub nu: usize,
    pub np: usize,
    pub x0: DVector<f64>,
    pub prediction: StackedPrediction,
    pub w_xx: DMatrix<f64>,
    pub w_x: DVector<f64>,
    pub w_uu: DMatrix<f64>,
    pub w_u: DVector<f64>,
    /// Kinematic equalities `E 𝒳 = e`.
    pub eq_a: DMatrix<f64>,
    pub eq_b: DVector<f64>,
    /// Quadratic inequalities over `𝒳`.
    pub ineqs: Vec<QuadConstraint>,
    /// `(step, task)` of each inequality.
    pub ineq_labels: Vec<(usize, usize)>,
}

impl QcqpProblem {
    pub fn n_state_vars(&self) -> usize {
        (self.np + 1) * self.nx
    }

    pub fn n_input_vars(&self) -> usize {
        self.np * self.nu
    }

    /// Objective `𝒳ᵀ W_xx 𝒳 + W_x 𝒳 + 𝒰ᵀ W_uu 𝒰 + W_u 𝒰`.
    pub fn objective(&self, states: &DVector<f64>, inputs: &DVector<f64>) -> f64 {
        states.dot(&(&self.w_xx * states)) + self.w_x.dot(states) + inputs.dot(&(&self.w_uu * inputs)) + self.w_u.dot(inputs)
    }

    /// Sparse view over `v = [𝒳; 𝒰]` with the prediction as equalities.
    pub fn sparse(&self) -> Qcqp {
        let (sx, su) = (self.n_state_vars(), self.n_input_vars());
        let nv = sx + su;
        let mut h = DMatrix::zeros(nv, nv);
        h.view_mut((0, 0), (sx, sx)).copy_from(&self.w_xx);
        h.view_mut((sx, sx), (su, su)).copy_from(&self.w_uu);
        let c = vstack_vec(&[&self.w_x, &self.w_u]);
        let me = sx + self.eq_a.nrows();
        let mut a = DMatrix::zeros(me, nv);
        a.view_mut((0, 0), (sx, sx)).fill_with_identity();
        a.view_mut((0, sx), (sx, su)).copy_from(&(-&self.prediction.b));
        a.view_mut((sx, 0), (self.eq_a.nrows(), sx)).copy_from(&self.eq_a);
        let b = vstack_vec(&[&(&self.prediction.a * &self.x0 + &self.prediction.r), &self.eq_b]);
        let ineqs = self
            .ineqs
            .iter()
            .map(|g| {
                let mut p = DMatrix::zeros(nv, nv);
                p.view_mut((0, 0), (sx, sx)).copy_from(&g.p);
                let mut q = DVector::zeros(nv);
                q.rows_mut(0, sx).copy_from(&g.q);
                QuadConstraint { p, q, r: g.r }
            })
            .collect();
        Qcqp { h, c, c0: 0.0, a, b, ineqs }
    }

    /// Condensed view over `𝒰` with the states eliminated; the constant term
    /// makes its objective equal to the sparse one at corresponding points.
    pub fn condensed(&self) -> Qcqp {
        let (s, s0) = self.prediction.affine(&self.x0);
        let h = sym(&(s.transpose() * &self.w_xx * &s + &self.w_uu));
        let c = s.tr_mul(&(&self.w_xx * &s0 * 2.0 + &self.w_x)) + &self.w_u;
        let c0 = s0.dot(&(&self.w_xx * &s0)) + self.w_x.dot(&s0);
        let a = &self.eq_a * &s;
        let b = &self.eq_b - &self.eq_a * &s0;
        let ineqs = self
            .ineqs
            .iter()
            .map(|g| QuadConstraint {
                p: sym(&(s.transpose() * &g.p * &s)),
                q: s.tr_mul(&(&g.p * &s0 * 2.0 + &g.q)),
                r: g.eval(&s0),
            })
            .collect();
        Qcqp { h, c, c0, a, b, ineqs }
    }

    pub fn states(&self, inputs: &DVector<f64>) -> DVector<f64> {
        self.prediction.predict(&self.x0, inputs)
    }

    /// Stacks `[𝒳; 𝒰]` for the sparse view.
    pub fn sparse_point(&self, inputs: &DVector<f64>) -> DVector<f64> {
        vstack_vec(&[&self.states(inputs), inputs])
    }
}

/// Assembles the QCQP from its parts.
pub fn assemble_qcqp(
    prediction: StackedPrediction,
    cost: &CostTerms,
    kinematic: &[KinematicRows],
    hierarchy: &[HierarchyIneq],
    x0: &DVector<f64>,
) -> Result<QcqpProblem> {
    let (nx, nu, np) = (prediction.nx, prediction.nu, prediction.np);
    let n = nx / 2;
    if x0.len() != nx {
        return Err(Error::invalid(format!("assemble: x0 has {} entries, expected {nx}", x0.len())));
    }
    if cost.running.len() != np {
        return Err(Error::invalid(format!(
            "assemble: cost has {} running steps, prediction has {np}",
            cost.running.len()
        )));
    }
    let sx = (np + 1) * nx;
    let mut w_xx = DMatrix::zeros(sx, sx);
    let mut w_x = DVector::zeros(sx);
    let mut w_uu = DMatrix::zeros(np * nu, np * nu);
    let mut w_u = DVector::zeros(np * nu);
    for (i, step) in cost.running.iter().chain(std::iter::once(&cost.terminal)).enumerate() {
        if step.wxx.shape() != (nx, nx) || step.wx.len() != nx {
            return Err(Error::invalid(format!("assemble: state cost block {i} has the wrong size")));
        }
        w_xx.view_mut((i * nx, i * nx), (nx, nx)).copy_from(&step.wxx);
        w_x.rows_mut(i * nx, nx).copy_from(&step.wx);
        if i < np {
            if step.wuu.shape() != (nu, nu) || step.wu.len() != nu {
                return Err(Error::invalid(format!("assemble: input cost block {i} has the wrong size")));
            }
            w_uu.view_mut((i * nu, i * nu), (nu, nu)).copy_from(&step.wuu);
            w_u.rows_mut(i * nu, nu).copy_from(&step.wu);
        }
    }
    let rows: usize = kinematic.iter().map(|k| k.a.nrows()).sum();
    let mut eq_a = DMatrix::zeros(rows, sx);
    let mut eq_b = DVector::zeros(rows);
    let mut r = 0;
    for k in kinematic {
        if k.step > np || k.a.ncols() != n {
            return Err(Error::invalid("assemble: kinematic rows do not fit the horizon"));
        }
        eq_a.view_mut((r, k.step * nx), (k.a.nrows(), n)).copy_from(&k.a);
        eq_b.rows_mut(r, k.a.nrows()).copy_from(&(-&k.b));
        r += k.a.nrows();
    }
    let mut ineqs = Vec::with_capacity(hierarchy.len());
    let mut labels = Vec::with_capacity(hierarchy.len());
    for h in hierarchy {
        if h.step > np || h.p.shape() != (n, n) {
            return Err(Error::invalid("assemble: hierarchy constraint does not fit the horizon"));
        }
        let mut p = DMatrix::zeros(sx, sx);
        p.view_mut((h.step * nx, h.step * nx), (n, n)).copy_from(&h.p);
        let mut q = DVector::zeros(sx);
        q.rows_mut(h.step * nx, n).copy_from(&h.z);
        ineqs.push(QuadConstraint { p, q, r: h.e });
        labels.push((h.step, h.task));
    }
    Ok(QcqpProblem {
        nx,
        nu,
        np,
        x0: x0.clone(),
        prediction,
        w_xx,
        w_x,
        w_uu,
        w_u,
        eq_a,
        eq_b,
        ineqs,
        ineq_labels: labels,
    })
}

/// Options of the transcription beyond the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct TranscriptionOptions {
    pub hierarchy: HierarchySpec,
    pub force_weight: f64,
    /// Emit the hierarchy inequalities at all.
    pub hierarchy_constraints: bool,
}

/// Builds the complete subproblem for one prediction window.
pub fn transcribe(
    model: &RobotModel,
    tasks: &[TaskDef],
    trajectories: &[TaskTrajectory],
    nominal: &NominalTrajectory,
    x0: &DVector<f64>,
    horizon: &HorizonSpec,
    options: &TranscriptionOptions,
) -> Result<QcqpProblem> {
    let steps = linearize_along(model, nominal, horizon)?;
    let prediction = stack_prediction(&steps)?;
    let cost = quadratic_cost(model, tasks, trajectories, nominal, options.force_weight)?;
    let kin = kinematic_equalities(model, nominal);
    let hier = if options.hierarchy_constraints && tasks.len() > 1 {
        hierarchy_constraints(model, tasks, trajectories, nominal, &options.hierarchy)?
    } else {
        Vec::new()
    };
    assemble_qcqp(prediction, &cost, &kin, &hier, x0)
}

#[cfg(test)]
mod horizon_tests {
    use super::*;

    #[test]
    fn divisibility_enforced() {
        let h = HorizonSpec { t0: 0.0, tf: 0.8, n: 80, np: 10, ne: 3 };
        let err = h.validate().unwrap_err().to_string();
        assert!(err.contains("not divisible"), "{err}");
        let h = HorizonSpec { t0: 0.0, tf: 0.81, n: 81, np: 10, ne: 3 };
        h.validate().unwrap();
        assert_eq!(h.subproblems(), 27);
        let h = HorizonSpec { t0: 0.0, tf: 0.8, n: 80, np: 10, ne: 4 };
        h.validate().unwrap();
        assert_eq!(h.subproblems(), 20);
        assert!((h.sigma() - 0.1).abs() < 1e-15);
    }
}
