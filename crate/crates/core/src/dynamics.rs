//! Rigid-body dynamics and the constraint-consistent projections built on it.
//!
//! The equations of motion are
//! `M(q) q̈ + b(q, q̇) + Jcᵀ F_c = Uᵀ Γ`, with the holonomic constraint
//! enforced at acceleration level, `Jc q̈ + J̇c q̇ = 0`.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::linalg::pinv;
use crate::model::{JointKind, Poses, RobotModel};

/// Joint position and velocity.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantState {
    pub q: DVector<f64>,
    pub qd: DVector<f64>,
}

impl PlantState {
    pub fn new(q: DVector<f64>, qd: DVector<f64>) -> Self {
        PlantState { q, qd }
    }

    pub fn at_rest(q: DVector<f64>) -> Self {
        let n = q.len();
        PlantState {
            q,
            qd: DVector::zeros(n),
        }
    }
}

/// Every dynamics quantity the controllers need at one state.
#[derive(Debug, Clone)]
pub struct DynamicsTerms {
    /// Mass matrix `M`.
    pub mass: DMatrix<f64>,
    pub mass_inv: DMatrix<f64>,
    /// Coriolis, centrifugal and gravity terms `b`.
    pub bias: DVector<f64>,
    /// Gravity part of `b` alone.
    pub gravity: DVector<f64>,
    /// Constraint Jacobian `Jc`.
    pub jc: DMatrix<f64>,
    /// `J̇c q̇`.
    pub jc_dot_qd: DVector<f64>,
    /// Constraint-space inertia `Λc = (Jc M⁻¹ Jcᵀ)⁺`.
    pub lambda_c: DMatrix<f64>,
    /// Dynamically consistent inverse `J̄c = M⁻¹ Jcᵀ Λc`.
    pub jc_bar: DMatrix<f64>,
    /// Constraint null-space projector `Nc = I - J̄c Jc`.
    pub nc: DMatrix<f64>,
    /// Projected bias `bc = Ncᵀ b + Jcᵀ Λc J̇c q̇`.
    pub bc: DVector<f64>,
    /// Actuation selection `U`.
    pub u: DMatrix<f64>,
}

impl DynamicsTerms {
    pub fn n(&self) -> usize {
        self.mass.nrows()
    }

    /// Constraint force for the torque `gamma`:
    /// `F_c = J̄cᵀ (Uᵀ Γ - b) + Λc J̇c q̇`.
    pub fn constraint_force(&self, gamma: &DVector<f64>) -> DVector<f64> {
        let generalized = self.u.tr_mul(gamma) - &self.bias;
        self.jc_bar.tr_mul(&generalized) + &self.lambda_c * &self.jc_dot_qd
    }

    /// Constraint-consistent forward dynamics `q̈ = M⁻¹ (Ncᵀ Uᵀ Γ - bc)`.
    pub fn forward_dynamics(&self, gamma: &DVector<f64>) -> DVector<f64> {
        let rhs = self.nc.tr_mul(&self.u.tr_mul(gamma)) - &self.bc;
        &self.mass_inv * rhs
    }

    /// Unconstrained forward dynamics with an explicit constraint force:
    /// `q̈ = M⁻¹ (Uᵀ Γ - b - Jcᵀ F)`.
    pub fn forward_dynamics_with_force(&self, gamma: &DVector<f64>, force: &DVector<f64>) -> DVector<f64> {
        let rhs = self.u.tr_mul(gamma) - &self.bias - self.jc.tr_mul(force);
        &self.mass_inv * rhs
    }
}

/// Evaluates mass matrix, bias, constraint terms and projections at `(q, q̇)`.
pub fn eval_dynamics(model: &RobotModel, q: &DVector<f64>, qd: &DVector<f64>) -> Result<DynamicsTerms> {
    let n = model.n();
    if q.len() != n || qd.len() != n {
        return Err(Error::invalid(format!(
            "state dimension mismatch: model has {n} joints, got q[{}], qd[{}]",
            q.len(),
            qd.len()
        )));
    }
    if q.iter().chain(qd.iter()).any(|v| !v.is_finite()) {
        return Err(Error::numerical("non-finite joint state"));
    }
    let poses = model.poses(q);
    let mass = mass_matrix_at(model, &poses);
    let bias = rnea(model, &poses, qd, &DVector::zeros(n), true);
    let gravity = rnea(model, &poses, &DVector::zeros(n), &DVector::zeros(n), true);
    let mass_inv = mass
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::numerical("mass matrix is not positive definite"))?;

    let jc = model.constraint_jacobian(q);
    let jc_dot_qd = model.constraint_jacobian_dot(q, qd) * qd;
    let lambda_c = pinv(&(&jc * &mass_inv * jc.transpose()));
    let jc_bar = &mass_inv * jc.transpose() * &lambda_c;
    let nc = DMatrix::identity(n, n) - &jc_bar * &jc;
    let bc = nc.tr_mul(&bias) + jc.tr_mul(&(&lambda_c * &jc_dot_qd));
    Ok(DynamicsTerms {
        mass,
        mass_inv,
        bias,
        gravity,
        jc,
        jc_dot_qd,
        lambda_c,
        jc_bar,
        nc,
        bc,
        u: model.selection(),
    })
}

/// Mass matrix, one column per unit acceleration with gravity switched off.
pub fn mass_matrix(model: &RobotModel, q: &DVector<f64>) -> DMatrix<f64> {
    mass_matrix_at(model, &model.poses(q))
}

fn mass_matrix_at(model: &RobotModel, poses: &Poses) -> DMatrix<f64> {
    let n = model.n();
    let zero = DVector::zeros(n);
    let mut m = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut e = DVector::zeros(n);
        e[j] = 1.0;
        m.set_column(j, &rnea(model, poses, &zero, &e, false));
    }
    // Exact symmetry in exact arithmetic; remove round-off asymmetry.
    (&m + m.transpose()) * 0.5
}

/// Inverse dynamics `τ = M q̈ + b` via a world-frame recursive Newton-Euler
/// pass. Gravity enters as an upward base acceleration when `with_gravity`.
pub fn inverse_dynamics(
    model: &RobotModel,
    q: &DVector<f64>,
    qd: &DVector<f64>,
    qdd: &DVector<f64>,
) -> DVector<f64> {
    rnea(model, &model.poses(q), qd, qdd, true)
}

fn rnea(
    model: &RobotModel,
    poses: &Poses,
    qd: &DVector<f64>,
    qdd: &DVector<f64>,
    with_gravity: bool,
) -> DVector<f64> {
    let n = model.n();
    let base_acc = if with_gravity {
        -model.gravity
    } else {
        Vector3::zeros()
    };
    let mut omega = vec![Vector3::zeros(); n];
    let mut omega_dot = vec![Vector3::zeros(); n];
    let mut acc = vec![Vector3::zeros(); n];
    let mut force = vec![Vector3::zeros(); n];
    let mut moment = vec![Vector3::zeros(); n];

    for (i, joint) in model.joints.iter().enumerate() {
        let (w_p, wd_p, a_p, o_p) = match joint.parent {
            Some(p) => (omega[p], omega_dot[p], acc[p], poses.origin[p]),
            None => (Vector3::zeros(), Vector3::zeros(), base_acc, Vector3::zeros()),
        };
        let z = poses.axis[i];
        let r = poses.origin[i] - o_p;
        let mut a = a_p + wd_p.cross(&r) + w_p.cross(&w_p.cross(&r));
        match joint.kind {
            JointKind::Revolute => {
                omega[i] = w_p + z * qd[i];
                omega_dot[i] = wd_p + z * qdd[i] + w_p.cross(&z) * qd[i];
            }
            JointKind::Prismatic => {
                omega[i] = w_p;
                omega_dot[i] = wd_p;
                a += w_p.cross(&z) * (2.0 * qd[i]) + z * qdd[i];
            }
        }
        acc[i] = a;

        let link = &model.links[i];
        let rot = poses.rotation[i];
        let rc = rot * link.com;
        let a_c = a + omega_dot[i].cross(&rc) + omega[i].cross(&omega[i].cross(&rc));
        let inertia: Matrix3<f64> = rot * link.inertia * rot.transpose();
        let f = a_c * link.mass;
        let n_c = inertia * omega_dot[i] + omega[i].cross(&(inertia * omega[i]));
        force[i] = f;
        moment[i] = n_c + rc.cross(&f);
    }

    let mut tau = DVector::zeros(n);
    for i in (0..n).rev() {
        let z = poses.axis[i];
        tau[i] = match model.joints[i].kind {
            JointKind::Revolute => z.dot(&moment[i]),
            JointKind::Prismatic => z.dot(&force[i]),
        };
        if let Some(p) = model.joints[i].parent {
            let r = poses.origin[i] - poses.origin[p];
            let f = force[i];
            let mi = moment[i];
            moment[p] += mi + r.cross(&f);
            force[p] += f;
        }
    }
    tau
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{self, GRAVITY};
    use approx::assert_relative_eq;

    /// Closed-form planar 2R dynamics for rods of length `l`, mass `m`,
    /// COM at `l/2`, inertia `m l²/12`, angles measured from hanging down.
    fn two_link_closed_form(q: &DVector<f64>, qd: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>) {
        let (m, l) = (1.0, 0.5);
        let lc = l / 2.0;
        let i = m * l * l / 12.0;
        let c2 = q[1].cos();
        let s2 = q[1].sin();
        let m11 = 2.0 * i + m * lc * lc + m * (l * l + lc * lc + 2.0 * l * lc * c2);
        let m12 = i + m * (lc * lc + l * lc * c2);
        let m22 = i + m * lc * lc;
        let h = m * l * lc * s2;
        let cor = DVector::from_vec(vec![
            -h * (2.0 * qd[0] * qd[1] + qd[1] * qd[1]),
            h * qd[0] * qd[0],
        ]);
        let g1 = (m * lc + m * l) * GRAVITY * q[0].sin() + m * lc * GRAVITY * (q[0] + q[1]).sin();
        let g2 = m * lc * GRAVITY * (q[0] + q[1]).sin();
        let grav = DVector::from_vec(vec![g1, g2]);
        (
            DMatrix::from_row_slice(2, 2, &[m11, m12, m12, m22]),
            cor + grav,
        )
    }

    #[test]
    fn pendulum_matches_closed_form() {
        let m = model::pendulum();
        let q = DVector::from_vec(vec![0.7]);
        let qd = DVector::from_vec(vec![1.3]);
        let t = eval_dynamics(&m, &q, &qd).unwrap();
        assert_relative_eq!(t.mass[(0, 0)], 1.0 / 3.0, epsilon = 1e-12);
        assert_relative_eq!(t.bias[0], 0.5 * GRAVITY * 0.7f64.sin(), epsilon = 1e-12);
    }

    #[test]
    fn two_link_matches_closed_form() {
        let m = model::two_link_arm();
        for (q, qd) in [
            (vec![0.3, -0.8], vec![1.1, -0.4]),
            (vec![-1.2, 2.0], vec![0.0, 3.0]),
            (vec![2.5, 0.1], vec![-2.0, 0.7]),
        ] {
            let q = DVector::from_vec(q);
            let qd = DVector::from_vec(qd);
            let t = eval_dynamics(&m, &q, &qd).unwrap();
            let (mm, b) = two_link_closed_form(&q, &qd);
            assert!((&t.mass - mm).amax() < 1e-12);
            assert!((&t.bias - b).amax() < 1e-12);
        }
    }

    #[test]
    fn constrained_dynamics_matches_kkt() {
        let m = model::mini_scorpio_nl();
        let q = model::mini_scorpio_reference_q();
        let qd = DVector::from_vec(vec![0.4, -0.3, 0.3, -0.2]);
        let t = eval_dynamics(&m, &q, &qd).unwrap();
        let gamma = DVector::from_vec(vec![1.5, -0.7]);
        let qdd = t.forward_dynamics(&gamma);
        let f = t.constraint_force(&gamma);

        let n = 4;
        let nc = t.jc.nrows();
        let mut k = DMatrix::zeros(n + nc, n + nc);
        k.view_mut((0, 0), (n, n)).copy_from(&t.mass);
        k.view_mut((0, n), (n, nc)).copy_from(&t.jc.transpose());
        k.view_mut((n, 0), (nc, n)).copy_from(&t.jc);
        let mut rhs = DVector::zeros(n + nc);
        rhs.rows_mut(0, n).copy_from(&(t.u.tr_mul(&gamma) - &t.bias));
        rhs.rows_mut(n, nc).copy_from(&(-&t.jc_dot_qd));
        let sol = k.lu().solve(&rhs).unwrap();
        assert!((qdd - sol.rows(0, n)).amax() < 1e-9);
        assert!((f - sol.rows(n, nc)).amax() < 1e-9);
    }

    #[test]
    fn projector_identities() {
        let m = model::mini_scorpio();
        let q = DVector::from_vec(vec![-1.0, 0.5, -0.5, 0.5]);
        let t = eval_dynamics(&m, &q, &DVector::zeros(4)).unwrap();
        assert!((&t.jc * &t.nc).amax() < 1e-12);
        assert!((&t.nc * &t.nc - &t.nc).amax() < 1e-12);
        let w1 = &t.mass_inv * t.nc.transpose();
        let w2 = &t.nc * &t.mass_inv;
        assert!((w1 - w2).amax() < 1e-12);
    }

    #[test]
    fn rejects_wrong_dimensions_and_nan() {
        let m = model::pendulum();
        assert!(matches!(
            eval_dynamics(&m, &DVector::zeros(2), &DVector::zeros(1)),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            eval_dynamics(&m, &DVector::from_vec(vec![f64::NAN]), &DVector::zeros(1)),
            Err(Error::NumericalFailure(_))
        ));
    }
}
