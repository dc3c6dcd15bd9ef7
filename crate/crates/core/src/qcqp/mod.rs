//! Dense primal log-barrier interior-point solver for QCQPs
//!
//! ```text
//! minimize    zᵀ H z + cᵀ z + c0
//! subject to  zᵀ P_j z + q_jᵀ z + r_j <= 0,   j = 1..m
//!             A z = b
//! ```
//!
//! Equalities are eliminated through an orthonormal null-space basis of `A`
//! (so redundant rows are harmless), each centering step is a damped Newton
//! method on `t f(z) - Σ log(-g_j(z))`, and a Phase-I problem provides a
//! strictly feasible start when the warm start is not. Inequalities with a
//! positive semi-definite `P_j` whose minimum value is zero have no strict
//! interior; they are presolved into the equivalent linear equalities.

mod io;

pub use io::{dump, load};

use std::time::Instant;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::linalg::{min_eigenvalue, pinv, solve_robust, sym, vec_inf_norm};

/// `zᵀ P z + qᵀ z + r <= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadConstraint {
    pub p: DMatrix<f64>,
    pub q: DVector<f64>,
    pub r: f64,
}

impl QuadConstraint {
    pub fn eval(&self, z: &DVector<f64>) -> f64 {
        z.dot(&(&self.p * z)) + self.q.dot(z) + self.r
    }

    pub fn grad(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.p * z * 2.0 + &self.q
    }
}

/// A dense QCQP instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Qcqp {
    pub h: DMatrix<f64>,
    pub c: DVector<f64>,
    pub c0: f64,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub ineqs: Vec<QuadConstraint>,
}

impl Qcqp {
    /// Unconstrained problem with the given objective.
    pub fn new(h: DMatrix<f64>, c: DVector<f64>) -> Self {
        let n = c.len();
        Qcqp {
            h,
            c,
            c0: 0.0,
            a: DMatrix::zeros(0, n),
            b: DVector::zeros(0),
            ineqs: Vec::new(),
        }
    }

    pub fn with_equalities(mut self, a: DMatrix<f64>, b: DVector<f64>) -> Self {
        self.a = a;
        self.b = b;
        self
    }

    pub fn with_ineq(mut self, p: DMatrix<f64>, q: DVector<f64>, r: f64) -> Self {
        self.ineqs.push(QuadConstraint { p, q, r });
        self
    }

    pub fn nvars(&self) -> usize {
        self.c.len()
    }

    pub fn objective(&self, z: &DVector<f64>) -> f64 {
        z.dot(&(&self.h * z)) + self.c.dot(z) + self.c0
    }

    pub fn objective_grad(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.h * z * 2.0 + &self.c
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.nvars();
        if self.h.shape() != (n, n) {
            return Err(Error::invalid(format!("qcqp: H must be {n}x{n}")));
        }
        if self.a.ncols() != n || self.a.nrows() != self.b.len() {
            return Err(Error::invalid("qcqp: equality block A/b has inconsistent dimensions"));
        }
        for (j, g) in self.ineqs.iter().enumerate() {
            if g.p.shape() != (n, n) || g.q.len() != n {
                return Err(Error::invalid(format!("qcqp: inequality {j} has inconsistent dimensions")));
            }
        }
        let finite = self.h.iter().chain(self.c.iter()).chain(self.a.iter()).chain(self.b.iter()).all(|v| v.is_finite())
            && self.c0.is_finite()
            && self.ineqs.iter().all(|g| g.p.iter().chain(g.q.iter()).all(|v| v.is_finite()) && g.r.is_finite());
        if !finite {
            return Err(Error::invalid("qcqp: non-finite problem data"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverMode {
    /// Require PSD objective and constraint matrices.
    Convex,
    /// Accept indefinite matrices; the Newton Hessian is eigen-shifted and
    /// only a local stationary point is reported.
    NonconvexLocal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub eq_tol: f64,
    pub ineq_tol: f64,
    pub duality_gap_tol: f64,
    /// Tolerance on the scaled stationarity residual.
    pub stationarity_tol: f64,
    /// Budget of Newton steps (Phase I and Phase II combined).
    pub max_iters: usize,
    pub t_init: f64,
    pub mu: f64,
    /// Armijo fraction of the line search.
    pub ls_alpha: f64,
    /// Backtracking factor of the line search.
    pub ls_beta: f64,
    pub mode: SolverMode,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            eq_tol: 1e-8,
            ineq_tol: 1e-8,
            duality_gap_tol: 1e-8,
            stationarity_tol: 1e-8,
            max_iters: 200,
            t_init: 1.0,
            mu: 10.0,
            ls_alpha: 0.3,
            ls_beta: 0.8,
            mode: SolverMode::Convex,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        let tols = [self.eq_tol, self.ineq_tol, self.duality_gap_tol, self.stationarity_tol, self.t_init];
        if tols.iter().any(|t| !(*t > 0.0)) {
            return Err(Error::invalid("solver settings: tolerances and initial t must be positive"));
        }
        if !(self.mu > 1.0) {
            return Err(Error::invalid("solver settings: mu must exceed 1"));
        }
        if !(self.ls_alpha > 0.0 && self.ls_alpha < 0.5 && self.ls_beta > 0.0 && self.ls_beta < 1.0) {
            return Err(Error::invalid("solver settings: line search requires 0 < alpha < 0.5, 0 < beta < 1"));
        }
        if self.max_iters == 0 {
            return Err(Error::invalid("solver settings: max_iters must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverStatus {
    Optimal,
    MaxIters,
    Infeasible,
    NumericalFailure,
}

impl SolverStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolverStatus::Optimal => "optimal",
            SolverStatus::MaxIters => "max-iters",
            SolverStatus::Infeasible => "infeasible",
            SolverStatus::NumericalFailure => "numerical-failure",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KktResiduals {
    /// `‖∇f + Σ λ_j ∇g_j + Aᵀ ν‖∞ / (1 + ‖∇f‖∞)`.
    pub stationarity: f64,
    /// `‖A z - b‖∞`.
    pub primal_eq: f64,
    /// `max(0, max_j g_j(z))`.
    pub primal_ineq: f64,
    /// `max_j |λ_j g_j(z)|`.
    pub complementarity: f64,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub z: DVector<f64>,
    /// Multipliers of the quadratic inequalities (zero for presolved ones).
    pub lambda: DVector<f64>,
    /// Multipliers of the original equality rows.
    pub nu: DVector<f64>,
    pub status: SolverStatus,
    pub residuals: KktResiduals,
    /// Newton steps taken.
    pub iterations: usize,
    pub objective: f64,
    /// Duality-gap bound `m / t` after each outer iteration.
    pub gap_history: Vec<f64>,
    /// Set in nonconvex-local mode when an indefinite Hessian was shifted:
    /// the point is only a local stationary point.
    pub local_only: bool,
    pub wall_time: f64,
    pub message: String,
}

/// KKT residuals of `(z, λ, ν)` for `problem`, computed from scratch.
pub fn kkt_residuals(problem: &Qcqp, z: &DVector<f64>, lambda: &DVector<f64>, nu: &DVector<f64>) -> KktResiduals {
    kkt_residuals_ext(problem, z, lambda, nu, None)
}

fn kkt_residuals_ext(
    problem: &Qcqp,
    z: &DVector<f64>,
    lambda: &DVector<f64>,
    nu: &DVector<f64>,
    extra: Option<(&DMatrix<f64>, &DVector<f64>, &DVector<f64>)>,
) -> KktResiduals {
    let gf = problem.objective_grad(z);
    let mut gl = gf.clone();
    let mut primal_ineq: f64 = 0.0;
    let mut comp: f64 = 0.0;
    for (j, g) in problem.ineqs.iter().enumerate() {
        let v = g.eval(z);
        gl += g.grad(z) * lambda[j];
        primal_ineq = primal_ineq.max(v);
        comp = comp.max((lambda[j] * v).abs());
    }
    let mut primal_eq = 0.0;
    if problem.a.nrows() > 0 {
        gl += problem.a.tr_mul(nu);
        primal_eq = vec_inf_norm(&(&problem.a * z - &problem.b));
    }
    if let Some((a2, b2, nu2)) = extra {
        if a2.nrows() > 0 {
            gl += a2.tr_mul(nu2);
            primal_eq = f64::max(primal_eq, vec_inf_norm(&(a2 * z - b2)));
        }
    }
    KktResiduals {
        stationarity: vec_inf_norm(&gl) / (1.0 + vec_inf_norm(&gf)),
        primal_eq,
        primal_ineq: primal_ineq.max(0.0),
        complementarity: comp,
    }
}

fn residuals_ok(r: &KktResiduals, s: &SolverSettings) -> bool {
    r.stationarity <= s.stationarity_tol
        && r.primal_eq <= s.eq_tol
        && r.primal_ineq <= s.ineq_tol
        && r.complementarity <= s.duality_gap_tol
}

/// Affine parametrization `z = z0 + Z y` of `{z : A z = b}`.
struct Affine {
    z0: DVector<f64>,
    basis: DMatrix<f64>,
    /// `‖A z0 - b‖∞` (nonzero when the equalities are inconsistent).
    residual: f64,
}

fn affine_subspace(a: &DMatrix<f64>, b: &DVector<f64>, n: usize, anchor: &DVector<f64>) -> Affine {
    if a.nrows() == 0 {
        return Affine {
            z0: anchor.clone(),
            basis: DMatrix::identity(n, n),
            residual: 0.0,
        };
    }
    // Row space from the SVD of A; the null space is its orthogonal complement.
    let svd = a.clone().svd(true, true);
    let v_t = svd.v_t.as_ref().expect("svd v_t");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let tol = crate::linalg::PINV_RTOL * smax.max(1.0) * (n.max(a.nrows()) as f64);
    let rows: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&k| svd.singular_values[k] > tol)
        .collect();
    let mut row_space = DMatrix::zeros(n, rows.len());
    for (c, &k) in rows.iter().enumerate() {
        row_space.set_column(c, &v_t.row(k).transpose());
    }
    // Complete to an orthonormal basis via the eigenvectors of I - R Rᵀ.
    let proj = DMatrix::identity(n, n) - &row_space * row_space.transpose();
    let eig = SymmetricEigen::new(sym(&proj));
    let mut cols = Vec::new();
    for k in 0..n {
        if eig.eigenvalues[k] > 0.5 {
            cols.push(eig.eigenvectors.column(k).into_owned());
        }
    }
    let basis = if cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&cols)
    };
    // Project the anchor onto the affine set.
    let ap = pinv(a);
    let z0 = anchor - &ap * (a * anchor - b);
    let residual = vec_inf_norm(&(a * &z0 - b));
    Affine { z0, basis, residual }
}

/// Replaces PSD inequalities whose minimum value is zero by the equivalent
/// linear equalities. Returns (kept inequality indices, extra A, extra b).
fn presolve(problem: &Qcqp) -> (Vec<usize>, DMatrix<f64>, DVector<f64>, Vec<usize>) {
    let n = problem.nvars();
    let mut keep = Vec::new();
    let mut rows: Vec<DVector<f64>> = Vec::new();
    let mut rhs: Vec<f64> = Vec::new();
    let mut presolved = Vec::new();
    for (j, g) in problem.ineqs.iter().enumerate() {
        let pmax = g.p.amax();
        if pmax == 0.0 {
            keep.push(j);
            continue;
        }
        let eig = SymmetricEigen::new(sym(&g.p));
        let lmax = eig.eigenvalues.max();
        let lmin = eig.eigenvalues.min();
        if lmin < -1e-10 * lmax.max(1.0) {
            keep.push(j);
            continue;
        }
        // Minimizer z* = -P⁺ q / 2 requires q in range(P).
        let p_pinv = pinv(&g.p);
        let zs = -(&p_pinv * &g.q) * 0.5;
        let q_out = vec_inf_norm(&(&g.p * &zs * 2.0 + &g.q));
        let scale = 1.0 + g.r.abs() + vec_inf_norm(&g.q) + pmax;
        let minval = g.eval(&zs);
        if q_out > 1e-10 * scale || minval.abs() > 1e-10 * scale || minval < -1e-13 * scale {
            keep.push(j);
            continue;
        }
        presolved.push(j);
        let tol = 1e-9 * lmax;
        for k in 0..n {
            if eig.eigenvalues[k] > tol {
                let v = eig.eigenvectors.column(k).into_owned();
                rhs.push(v.dot(&zs));
                rows.push(v);
            }
        }
    }
    let mut a = DMatrix::zeros(rows.len(), n);
    for (r, v) in rows.iter().enumerate() {
        a.set_row(r, &v.transpose());
    }
    (keep, a, DVector::from_vec(rhs), presolved)
}

/// Inequalities of the reduced problem in `y` coordinates.
struct ReducedIneq {
    p: DMatrix<f64>,
    q: DVector<f64>,
    r: f64,
}

impl ReducedIneq {
    fn eval(&self, y: &DVector<f64>) -> f64 {
        y.dot(&(&self.p * y)) + self.q.dot(y) + self.r
    }
}

struct Reduced {
    h: DMatrix<f64>,
    c: DVector<f64>,
    ineqs: Vec<ReducedIneq>,
}

fn reduce(problem: &Qcqp, keep: &[usize], aff: &Affine) -> Reduced {
    let z = &aff.basis;
    let z0 = &aff.z0;
    let h = sym(&(z.transpose() * &problem.h * z));
    let c = z.tr_mul(&(&problem.h * z0 * 2.0 + &problem.c));
    let ineqs = keep
        .iter()
        .map(|&j| {
            let g = &problem.ineqs[j];
            ReducedIneq {
                p: sym(&(z.transpose() * &g.p * z)),
                q: z.tr_mul(&(&g.p * z0 * 2.0 + &g.q)),
                r: g.eval(z0),
            }
        })
        .collect();
    Reduced { h, c, ineqs }
}

struct Centering {
    iterations: usize,
    converged: bool,
    shifted: bool,
    failed: bool,
}

/// Newton centering on `t (yᵀ H y + cᵀ y) - Σ log(-g_j(y))` from a strictly
/// feasible `y`.
#[allow(clippy::too_many_arguments)]
fn center(
    h: &DMatrix<f64>,
    c: &DVector<f64>,
    ineqs: &[ReducedIneq],
    y: &mut DVector<f64>,
    t: f64,
    settings: &SolverSettings,
    budget: usize,
    stop: &dyn Fn(&DVector<f64>) -> bool,
) -> Centering {
    let k = y.len();
    let mut out = Centering {
        iterations: 0,
        converged: false,
        shifted: false,
        failed: false,
    };
    let phi = |y: &DVector<f64>| -> f64 {
        let mut v = t * (y.dot(&(h * y)) + c.dot(y));
        for g in ineqs {
            let gv = g.eval(y);
            if !(gv < 0.0) {
                return f64::INFINITY;
            }
            v -= (-gv).ln();
        }
        v
    };
    if k == 0 {
        out.converged = true;
        return out;
    }
    while out.iterations < budget {
        let mut grad = (h * &*y * 2.0 + c) * t;
        let mut hess = h * (2.0 * t);
        for g in ineqs {
            let gv = g.eval(y);
            let dg = &g.p * &*y * 2.0 + &g.q;
            grad += &dg / (-gv);
            hess += (&dg * dg.transpose()) / (gv * gv) + &g.p * (2.0 / (-gv));
        }
        let hess = sym(&hess);
        let dy = match newton_direction(&hess, &grad, settings.mode) {
            Some((d, shifted)) => {
                out.shifted |= shifted;
                d
            }
            None => {
                out.failed = true;
                return out;
            }
        };
        let decrement = -grad.dot(&dy);
        out.iterations += 1;
        if !decrement.is_finite() {
            out.failed = true;
            return out;
        }
        if decrement * 0.5 <= 1e-13 {
            out.converged = true;
            return out;
        }
        let f0 = phi(y);
        let slack = 1e-13 * f0.abs().max(1.0);
        let mut s = 1.0;
        let mut accepted = false;
        for _ in 0..200 {
            let cand = &*y + &dy * s;
            let f1 = phi(&cand);
            if f1.is_finite() && f1 <= f0 - settings.ls_alpha * s * decrement + slack {
                *y = cand;
                accepted = true;
                break;
            }
            s *= settings.ls_beta;
        }
        if !accepted {
            // No further progress is representable at this precision.
            out.converged = decrement * 0.5 <= 1e-6;
            out.failed = !out.converged;
            return out;
        }
        if stop(y) {
            out.converged = true;
            return out;
        }
    }
    out
}

fn newton_direction(hess: &DMatrix<f64>, grad: &DVector<f64>, mode: SolverMode) -> Option<(DVector<f64>, bool)> {
    if let Some(ch) = hess.clone().cholesky() {
        let d = ch.solve(&(-grad));
        if d.iter().all(|v| v.is_finite()) {
            return Some((d, false));
        }
    }
    let scale = hess.amax().max(1.0);
    match mode {
        SolverMode::NonconvexLocal => {
            let lmin = min_eigenvalue(hess);
            if lmin < 0.0 {
                let mut shifted = hess.clone();
                let shift = -lmin + 1e-8 * scale;
                for i in 0..shifted.nrows() {
                    shifted[(i, i)] += shift;
                }
                let d = shifted.cholesky()?.solve(&(-grad));
                return Some((d, true));
            }
            solve_robust(hess, &(-grad)).map(|d| (d, false))
        }
        SolverMode::Convex => solve_robust(hess, &(-grad)).map(|d| (d, false)),
    }
}

fn check_convexity(problem: &Qcqp) -> Result<()> {
    let tol = |m: &DMatrix<f64>| -1e-10 * m.amax().max(1.0);
    let l = min_eigenvalue(&problem.h);
    if l < tol(&problem.h) {
        return Err(Error::invalid(format!(
            "qcqp: objective Hessian is not positive semi-definite (min eigenvalue {l:.3e}); use the nonconvex-local mode"
        )));
    }
    for (j, g) in problem.ineqs.iter().enumerate() {
        let l = min_eigenvalue(&g.p);
        if l < tol(&g.p) {
            return Err(Error::invalid(format!(
                "qcqp: inequality {j} is not convex (min eigenvalue {l:.3e}); use the nonconvex-local mode"
            )));
        }
    }
    Ok(())
}

/// Newton steps allowed per centering before the barrier parameter is
/// increased anyway.
const CENTERING_BUDGET: usize = 50;

/// Solves the QCQP, starting from `warm_start` when given.
pub fn solve(problem: &Qcqp, settings: &SolverSettings, warm_start: Option<&DVector<f64>>) -> Result<Solution> {
    problem.validate()?;
    settings.validate()?;
    if settings.mode == SolverMode::Convex {
        check_convexity(problem)?;
    }
    let started = Instant::now();
    let n = problem.nvars();
    if let Some(w) = warm_start {
        if w.len() != n {
            return Err(Error::invalid("qcqp: warm start has the wrong dimension"));
        }
    }
    let anchor = warm_start.cloned().unwrap_or_else(|| DVector::zeros(n));

    let (keep, a_pre, b_pre, presolved) = if settings.mode == SolverMode::Convex {
        presolve(problem)
    } else {
        ((0..problem.ineqs.len()).collect(), DMatrix::zeros(0, n), DVector::zeros(0), Vec::new())
    };
    let a_all = crate::linalg::vstack(&[&problem.a, &a_pre], n);
    let b_all = crate::linalg::vstack_vec(&[&problem.b, &b_pre]);
    let aff = affine_subspace(&a_all, &b_all, n, &anchor);

    let mut sol = Solution {
        z: aff.z0.clone(),
        lambda: DVector::zeros(problem.ineqs.len()),
        nu: DVector::zeros(problem.a.nrows()),
        status: SolverStatus::NumericalFailure,
        residuals: KktResiduals::default(),
        iterations: 0,
        objective: f64::NAN,
        gap_history: Vec::new(),
        local_only: false,
        wall_time: 0.0,
        message: String::new(),
    };
    let eq_scale = 1.0 + vec_inf_norm(&b_all) + a_all.amax();
    if aff.residual > settings.eq_tol.max(1e-10 * eq_scale) {
        sol.status = SolverStatus::Infeasible;
        sol.message = format!("equality constraints are inconsistent (residual {:.3e})", aff.residual);
        sol.wall_time = started.elapsed().as_secs_f64();
        return Ok(sol);
    }

    let red = reduce(problem, &keep, &aff);
    let k = aff.basis.ncols();
    let mut y = DVector::zeros(k);

    // Constant inequalities (no dependence on y) are either vacuous or infeasible.
    let mut active: Vec<usize> = Vec::new();
    for (idx, g) in red.ineqs.iter().enumerate() {
        if g.p.amax() == 0.0 && g.q.amax() == 0.0 {
            if g.r > settings.ineq_tol {
                sol.status = SolverStatus::Infeasible;
                sol.message = format!("inequality {} is violated on the whole feasible subspace", keep[idx]);
                sol.wall_time = started.elapsed().as_secs_f64();
                return Ok(sol);
            }
        } else {
            active.push(idx);
        }
    }
    let ineqs: Vec<ReducedIneq> = active
        .iter()
        .map(|&i| ReducedIneq {
            p: red.ineqs[i].p.clone(),
            q: red.ineqs[i].q.clone(),
            r: red.ineqs[i].r,
        })
        .collect();
    let m = ineqs.len();

    // Phase I when the start is not strictly feasible.
    if ineqs.iter().any(|g| !(g.eval(&y) < 0.0)) {
        match phase_one(&ineqs, &y, settings, &mut sol.iterations) {
            Some(y1) => y = y1,
            None => {
                sol.status = if sol.iterations >= settings.max_iters {
                    SolverStatus::MaxIters
                } else {
                    SolverStatus::Infeasible
                };
                sol.message = "phase I found no strictly feasible point".into();
                sol.z = &aff.z0 + &aff.basis * &y;
                sol.objective = problem.objective(&sol.z);
                sol.wall_time = started.elapsed().as_secs_f64();
                return Ok(sol);
            }
        }
    }

    // Phase II. After every outer iteration an active-set polish is tried;
    // it removes the O(1/t) bias of the central path and ends the solve as
    // soon as the polished point passes the KKT tolerances.
    let residual_problem = problem_without(problem, &presolved);
    let residual_problem = residual_problem.as_ref().unwrap_or(problem);
    let recover = |y: &DVector<f64>, lam_red: &[f64]| {
        let z = &aff.z0 + &aff.basis * y;
        let mut lambda = DVector::zeros(problem.ineqs.len());
        for (slot, &i) in active.iter().enumerate() {
            lambda[keep[i]] = lam_red[slot];
        }
        let mut gl = problem.objective_grad(&z);
        for (j, g) in problem.ineqs.iter().enumerate() {
            if lambda[j] != 0.0 {
                gl += g.grad(&z) * lambda[j];
            }
        }
        let nu_all = if a_all.nrows() > 0 {
            -(pinv(&a_all.transpose()) * &gl)
        } else {
            DVector::zeros(0)
        };
        let n_orig = problem.a.nrows();
        let nu = nu_all.rows(0, n_orig).into_owned();
        let nu_pre = nu_all.rows(n_orig, a_pre.nrows()).into_owned();
        let residuals = kkt_residuals_ext(
            residual_problem,
            &z,
            &lambda_without(&lambda, &presolved),
            &nu,
            Some((&a_pre, &b_pre, &nu_pre)),
        );
        (z, lambda, nu, residuals)
    };
    let barrier_duals = |y: &DVector<f64>, t: f64| -> Vec<f64> { ineqs.iter().map(|g| 1.0 / (-t * g.eval(y))).collect() };

    let mut t = settings.t_init;
    let mut failed = false;
    let mut done = None;
    loop {
        let budget = settings.max_iters.saturating_sub(sol.iterations).min(CENTERING_BUDGET);
        if budget == 0 {
            break;
        }
        let res = center(&red.h, &red.c, &ineqs, &mut y, t, settings, budget, &|_| false);
        sol.iterations += res.iterations;
        sol.local_only |= res.shifted;
        if res.failed {
            failed = true;
            break;
        }
        let gap = m as f64 / t;
        if res.converged {
            sol.gap_history.push(gap);
        }
        if m > 0 {
            if let Some((y2, l2)) = polish(&red.h, &red.c, &ineqs, &y, &barrier_duals(&y, t), settings) {
                let out = recover(&y2, &l2);
                if residuals_ok(&out.3, settings) {
                    done = Some(out);
                    break;
                }
            }
        }
        if res.converged && gap <= settings.duality_gap_tol {
            break;
        }
        if sol.iterations >= settings.max_iters {
            break;
        }
        t *= settings.mu;
    }
    let (z, lambda, nu, residuals) = done.unwrap_or_else(|| recover(&y, &barrier_duals(&y, t)));

    sol.z = z;
    sol.lambda = lambda;
    sol.nu = nu;
    sol.objective = problem.objective(&sol.z);
    sol.residuals = residuals;
    sol.status = if residuals_ok(&residuals, settings) {
        SolverStatus::Optimal
    } else if failed {
        SolverStatus::NumericalFailure
    } else if sol.iterations >= settings.max_iters {
        SolverStatus::MaxIters
    } else {
        SolverStatus::NumericalFailure
    };
    if !presolved.is_empty() {
        sol.message = format!("{} zero-interior inequalities handled as equalities", presolved.len());
    }
    sol.wall_time = started.elapsed().as_secs_f64();
    Ok(sol)
}

/// Newton iterations on the KKT system with a working set of active
/// constraints treated as equalities.
fn polish_newton(
    h: &DMatrix<f64>,
    c: &DVector<f64>,
    ineqs: &[ReducedIneq],
    y0: &DVector<f64>,
    lam0: &[f64],
    act: &[usize],
) -> Option<(DVector<f64>, Vec<f64>)> {
    let k = y0.len();
    let na = act.len();
    let mut y = y0.clone();
    let mut lam: Vec<f64> = (0..ineqs.len()).map(|j| if act.contains(&j) { lam0[j].max(0.0) } else { 0.0 }).collect();
    for _ in 0..8 {
        let r = stationarity_vector(h, c, ineqs, &y, &lam);
        let mut kkt = DMatrix::zeros(k + na, k + na);
        let mut hl = h * 2.0;
        for &j in act {
            hl += &ineqs[j].p * (2.0 * lam[j]);
        }
        kkt.view_mut((0, 0), (k, k)).copy_from(&hl);
        let mut rhs = DVector::zeros(k + na);
        rhs.rows_mut(0, k).copy_from(&(-&r));
        for (a, &j) in act.iter().enumerate() {
            let g = &ineqs[j];
            let dg = &g.p * &y * 2.0 + &g.q;
            kkt.view_mut((0, k + a), (k, 1)).copy_from(&dg);
            kkt.view_mut((k + a, 0), (1, k)).copy_from(&dg.transpose());
            rhs[k + a] = -g.eval(&y);
        }
        let d = solve_robust(&kkt, &rhs)?;
        y += d.rows(0, k);
        for (a, &j) in act.iter().enumerate() {
            lam[j] += d[k + a];
        }
        if d.amax() <= 1e-15 * (1.0 + y.amax()) {
            break;
        }
    }
    if y.iter().chain(lam.iter()).all(|v| v.is_finite()) {
        Some((y, lam))
    } else {
        None
    }
}

fn stationarity_vector(h: &DMatrix<f64>, c: &DVector<f64>, ineqs: &[ReducedIneq], y: &DVector<f64>, lam: &[f64]) -> DVector<f64> {
    let mut r = h * y * 2.0 + c;
    for (j, g) in ineqs.iter().enumerate() {
        if lam[j] != 0.0 {
            r += (&g.p * y * 2.0 + &g.q) * lam[j];
        }
    }
    r
}

/// Active-set polish of the barrier point: starting from the constraints
/// whose barrier multiplier exceeds their slack, solve the equality-
/// constrained KKT system, drop the constraint with the most negative
/// multiplier or add the most violated one, and repeat. Returns `None`
/// unless the result is primal and dual feasible and more stationary than
/// the barrier point.
fn polish(
    h: &DMatrix<f64>,
    c: &DVector<f64>,
    ineqs: &[ReducedIneq],
    y0: &DVector<f64>,
    lam0: &[f64],
    settings: &SolverSettings,
) -> Option<(DVector<f64>, Vec<f64>)> {
    let base = vec_inf_norm(&stationarity_vector(h, c, ineqs, y0, lam0));
    let mut act: Vec<usize> = (0..ineqs.len()).filter(|&j| lam0[j] > -ineqs[j].eval(y0)).collect();
    let feas_tol = 0.1 * settings.ineq_tol;
    for _ in 0..=2 * ineqs.len() {
        let (y, lam) = polish_newton(h, c, ineqs, y0, lam0, &act)?;
        let worst_dual = act
            .iter()
            .copied()
            .filter(|&j| lam[j] < 0.0)
            .min_by(|&a, &b| lam[a].total_cmp(&lam[b]));
        if let Some(j) = worst_dual {
            act.retain(|&a| a != j);
            continue;
        }
        let worst_primal = (0..ineqs.len())
            .filter(|j| !act.contains(j))
            .map(|j| (j, ineqs[j].eval(&y)))
            .filter(|&(_, v)| v > feas_tol)
            .max_by(|a, b| a.1.total_cmp(&b.1));
        if let Some((j, _)) = worst_primal {
            act.push(j);
            act.sort_unstable();
            continue;
        }
        let after = vec_inf_norm(&stationarity_vector(h, c, ineqs, &y, &lam));
        return (after <= base).then_some((y, lam));
    }
    None
}

/// The problem with presolved inequalities removed (their multipliers live
/// on the equivalent equality rows).
fn problem_without(problem: &Qcqp, presolved: &[usize]) -> Option<Qcqp> {
    if presolved.is_empty() {
        return None;
    }
    let mut p = problem.clone();
    p.ineqs = problem
        .ineqs
        .iter()
        .enumerate()
        .filter(|(j, _)| !presolved.contains(j))
        .map(|(_, g)| g.clone())
        .collect();
    Some(p)
}

fn lambda_without(lambda: &DVector<f64>, presolved: &[usize]) -> DVector<f64> {
    if presolved.is_empty() {
        return lambda.clone();
    }
    let kept: Vec<f64> = lambda
        .iter()
        .enumerate()
        .filter(|(j, _)| !presolved.contains(j))
        .map(|(_, v)| *v)
        .collect();
    DVector::from_vec(kept)
}

/// Phase I: minimize `s` subject to `g_j(y) <= s` and `s >= -1`, stopping at
/// the first strictly feasible point with a safe margin.
fn phase_one(ineqs: &[ReducedIneq], y0: &DVector<f64>, settings: &SolverSettings, iterations: &mut usize) -> Option<DVector<f64>> {
    let k = y0.len();
    let gmax = ineqs.iter().map(|g| g.eval(y0)).fold(f64::NEG_INFINITY, f64::max);
    let scale = ineqs.iter().map(|g| 1.0 + g.r.abs()).fold(0.0, f64::max);
    let margin = 1e-6 * scale;
    // Variables w = [y; s].
    let mut h = DMatrix::zeros(k + 1, k + 1);
    let mut c = DVector::zeros(k + 1);
    c[k] = 1.0;
    let mut lifted: Vec<ReducedIneq> = ineqs
        .iter()
        .map(|g| {
            let mut p = DMatrix::zeros(k + 1, k + 1);
            p.view_mut((0, 0), (k, k)).copy_from(&g.p);
            let mut q = DVector::zeros(k + 1);
            q.rows_mut(0, k).copy_from(&g.q);
            q[k] = -1.0;
            ReducedIneq { p, q, r: g.r }
        })
        .collect();
    let mut q_floor = DVector::zeros(k + 1);
    q_floor[k] = -1.0;
    lifted.push(ReducedIneq {
        p: DMatrix::zeros(k + 1, k + 1),
        q: q_floor,
        r: -scale,
    });
    h.fill(0.0);
    let mut w = DVector::zeros(k + 1);
    w.rows_mut(0, k).copy_from(y0);
    w[k] = gmax.max(0.0) + 1.0 * scale;
    let feasible = |w: &DVector<f64>| -> bool {
        let y = w.rows(0, k).into_owned();
        ineqs.iter().all(|g| g.eval(&y) < -margin)
    };
    let mut t = settings.t_init;
    let m = lifted.len() as f64;
    loop {
        let budget = settings.max_iters.saturating_sub(*iterations);
        if budget == 0 {
            return None;
        }
        let res = center(&h, &c, &lifted, &mut w, t, settings, budget, &feasible);
        *iterations += res.iterations;
        if feasible(&w) {
            return Some(w.rows(0, k).into_owned());
        }
        if res.failed || !res.converged {
            return None;
        }
        if m / t <= settings.duality_gap_tol * scale {
            // Converged Phase I with s* >= -margin: no strictly feasible point.
            let y = w.rows(0, k).into_owned();
            return if ineqs.iter().all(|g| g.eval(&y) < 0.0) { Some(y) } else { None };
        }
        t *= settings.mu;
    }
}

/// Equality-constrained QP by a single KKT solve:
/// `[2H Aᵀ; A 0] [z; ν] = [-c; b]`, with an SVD fallback for redundant rows.
pub fn solve_qp_fast_path(problem: &Qcqp, settings: &SolverSettings) -> Result<Solution> {
    problem.validate()?;
    if !problem.ineqs.is_empty() {
        return Err(Error::invalid("qcqp fast path: problem has quadratic inequalities"));
    }
    let started = Instant::now();
    let n = problem.nvars();
    let me = problem.a.nrows();
    let mut k = DMatrix::zeros(n + me, n + me);
    k.view_mut((0, 0), (n, n)).copy_from(&(&problem.h * 2.0));
    k.view_mut((0, n), (n, me)).copy_from(&problem.a.transpose());
    k.view_mut((n, 0), (me, n)).copy_from(&problem.a);
    let mut rhs = DVector::zeros(n + me);
    rhs.rows_mut(0, n).copy_from(&(-&problem.c));
    rhs.rows_mut(n, me).copy_from(&problem.b);
    let sol = solve_robust(&k, &rhs);
    let mut out = Solution {
        z: DVector::zeros(n),
        lambda: DVector::zeros(0),
        nu: DVector::zeros(me),
        status: SolverStatus::NumericalFailure,
        residuals: KktResiduals::default(),
        iterations: 1,
        objective: f64::NAN,
        gap_history: Vec::new(),
        local_only: false,
        wall_time: 0.0,
        message: String::new(),
    };
    if let Some(x) = sol {
        out.z = x.rows(0, n).into_owned();
        out.nu = x.rows(n, me).into_owned();
        out.objective = problem.objective(&out.z);
        out.residuals = kkt_residuals(problem, &out.z, &out.lambda, &out.nu);
        let stationary = out.residuals.stationarity <= settings.stationarity_tol;
        out.status = if out.residuals.primal_eq > settings.eq_tol {
            if stationary {
                SolverStatus::Infeasible
            } else {
                SolverStatus::NumericalFailure
            }
        } else if stationary {
            SolverStatus::Optimal
        } else {
            SolverStatus::NumericalFailure
        };
        if out.status != SolverStatus::Optimal {
            out.message = "KKT system is singular or inconsistent".into();
        }
    } else {
        out.message = "KKT factorization failed".into();
    }
    out.wall_time = started.elapsed().as_secs_f64();
    Ok(out)
}

#[cfg(test)]
mod tests;
