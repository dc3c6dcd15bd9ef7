//! Invariant suite of the dynamics terms at random states.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wbcmpc::linalg::inf_norm;
use wbcmpc::{eval_dynamics, RobotModel};

/// Absolute tolerance of the algebraic identities.
pub const IDENTITY_TOL: f64 = 1e-10;
/// Absolute tolerance of the acceleration comparison against the
/// saddle-point solve.
pub const ACCEL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    Fail,
    Skip,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub outcome: Outcome,
    /// Worst residual over all samples (∞-norm).
    pub worst: f64,
    pub tolerance: f64,
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.outcome {
            Outcome::Pass => "PASS",
            Outcome::Fail => "FAIL",
            Outcome::Skip => "SKIP",
        };
        match self.outcome {
            Outcome::Skip => write!(f, "{tag} {} (no constraints)", self.name),
            _ => write!(f, "{tag} {} worst {:.3e} (tol {:.0e})", self.name, self.worst, self.tolerance),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub model: String,
    pub samples: usize,
    pub results: Vec<CheckResult>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.results.iter().all(|r| r.outcome != Outcome::Fail)
    }
}

struct Worst {
    name: &'static str,
    tolerance: f64,
    worst: f64,
    constraint: bool,
}

impl Worst {
    fn new(name: &'static str, tolerance: f64, constraint: bool) -> Self {
        Worst {
            name,
            tolerance,
            worst: 0.0,
            constraint,
        }
    }

    fn update(&mut self, v: f64) {
        // NaN propagates as a failure.
        if !(v <= self.worst) {
            self.worst = v;
        }
    }

    fn finish(self, nc: usize) -> CheckResult {
        let outcome = if self.constraint && nc == 0 {
            Outcome::Skip
        } else if self.worst <= self.tolerance {
            Outcome::Pass
        } else {
            Outcome::Fail
        };
        CheckResult {
            name: self.name,
            outcome,
            worst: self.worst,
            tolerance: self.tolerance,
        }
    }
}

/// Smallest eigenvalue of the mass matrix must exceed this.
const MASS_PD_MIN: f64 = 1e-9;

/// Constrained acceleration from the saddle-point system
/// `[M Jcᵀ; Jc 0] [q̈; F] = [UᵀΓ - b; -J̇c q̇]`, solved by SVD so that a
/// rank-deficient constraint Jacobian still yields the unique `q̈`.
fn saddle_point_acceleration(
    mass: &DMatrix<f64>,
    jc: &DMatrix<f64>,
    rhs_dyn: &DVector<f64>,
    rhs_con: &DVector<f64>,
) -> DVector<f64> {
    let (n, nc) = (mass.nrows(), jc.nrows());
    let mut k = DMatrix::zeros(n + nc, n + nc);
    k.view_mut((0, 0), (n, n)).copy_from(mass);
    k.view_mut((0, n), (n, nc)).copy_from(&jc.transpose());
    k.view_mut((n, 0), (nc, n)).copy_from(jc);
    let mut rhs = DVector::zeros(n + nc);
    rhs.rows_mut(0, n).copy_from(rhs_dyn);
    rhs.rows_mut(n, nc).copy_from(rhs_con);
    let svd = k.svd(true, true);
    let tol = 1e-12 * svd.singular_values.max();
    let sol = svd.solve(&rhs, tol).expect("SVD computed with U and V");
    sol.rows(0, n).into_owned()
}

/// Runs the invariant suite at `samples` random states drawn from a seeded
/// generator.
pub fn check_model(model: &RobotModel, samples: usize, seed: u64) -> CheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, m, nc) = (model.n(), model.m(), model.nc());
    let mut mass_sym = Worst::new("mass matrix symmetric", IDENTITY_TOL, false);
    let mut mass_pd = Worst::new("mass matrix positive definite", 0.0, false);
    let mut idempotent = Worst::new("Nc idempotent", IDENTITY_TOL, true);
    let mut annihilates = Worst::new("Jc Nc = 0", IDENTITY_TOL, true);
    let mut consistent = Worst::new("Nc M^-1 = M^-1 Nc^T", IDENTITY_TOL, true);
    let mut accel = Worst::new("accelerations match saddle-point solve", ACCEL_TOL, false);
    for _ in 0..samples {
        let q = DVector::from_fn(n, |_, _| rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI));
        let qd = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let gamma = DVector::from_fn(m, |_, _| rng.gen_range(-5.0..5.0));
        let terms = match eval_dynamics(model, &q, &qd) {
            Ok(t) => t,
            Err(_) => {
                accel.update(f64::NAN);
                continue;
            }
        };
        mass_sym.update(inf_norm(&(&terms.mass - terms.mass.transpose())));
        let min_eig = terms.mass.clone().symmetric_eigen().eigenvalues.min();
        // Recorded as a shortfall below the threshold (0 when satisfied).
        mass_pd.update((MASS_PD_MIN - min_eig).max(0.0));
        if nc > 0 {
            let ncm = &terms.nc;
            idempotent.update(inf_norm(&(ncm * ncm - ncm)));
            annihilates.update(inf_norm(&(&terms.jc * ncm)));
            consistent.update(inf_norm(&(ncm * &terms.mass_inv - &terms.mass_inv * ncm.transpose())));
        }
        let qdd = terms.forward_dynamics(&gamma);
        let rhs_dyn = terms.u.tr_mul(&gamma) - &terms.bias;
        let oracle = saddle_point_acceleration(&terms.mass, &terms.jc, &rhs_dyn, &(-&terms.jc_dot_qd));
        accel.update((qdd - oracle).amax());
    }
    CheckReport {
        model: model.name.clone(),
        samples,
        results: [mass_sym, mass_pd, idempotent, annihilates, consistent, accel]
            .into_iter()
            .map(|w| w.finish(nc))
            .collect(),
    }
}
