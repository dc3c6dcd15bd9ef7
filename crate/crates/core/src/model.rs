//! Kinematic-tree robot models with passive joints and holonomic constraints.
//!
//! Models are immutable once built. They can be constructed in code (see the
//! benchmark constructors at the bottom of this module) or loaded from a TOML
//! model file:
//!
//! ```toml
//! name = "pendulum"
//! n = 1
//! gravity = [0.0, 0.0, -9.81]
//! actuated = [0]
//!
//! [[joints]]
//! kind = "revolute"          # or "prismatic"
//! axis = [0.0, 1.0, 0.0]
//! # parent = 0               # omitted: attached to the base
//! offset_xyz = [0.0, 0.0, 0.0]
//! offset_rpy = [0.0, 0.0, 0.0]
//!
//! [[links]]
//! mass = 1.0
//! com_xyz = [0.0, 0.0, -0.5]
//! inertia_6 = [0.0834, 0.0834, 0.0001, 0.0, 0.0, 0.0]  # ixx iyy izz ixy ixz iyz
//!
//! [[constraints]]
//! type = "joint_linear"
//! coeffs = [[0.0, 1.0, 1.0, 0.0]]
//! target = [0.0]
//! ```
//!
//! Link `i` is rigidly attached to the child side of joint `i`.

use std::path::Path;

use nalgebra::{DMatrix, DVector, Matrix3, Rotation3, Unit, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Step used for the central difference of constraint and task Jacobians
/// along the joint velocity.
pub const JDOT_FD_STEP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JointKind {
    Revolute,
    Prismatic,
}

#[derive(Debug, Clone)]
pub struct Joint {
    pub name: String,
    pub kind: JointKind,
    /// Unit axis expressed in the joint frame.
    pub axis: Vector3<f64>,
    pub parent: Option<usize>,
    pub offset_xyz: Vector3<f64>,
    pub offset_rpy: Vector3<f64>,
}

impl Joint {
    fn offset_rotation(&self) -> Rotation3<f64> {
        Rotation3::from_euler_angles(self.offset_rpy.x, self.offset_rpy.y, self.offset_rpy.z)
    }
}

#[derive(Debug, Clone)]
pub struct Link {
    pub name: String,
    pub mass: f64,
    /// Center of mass in the link frame.
    pub com: Vector3<f64>,
    /// Rotational inertia about the center of mass, link frame.
    pub inertia: Matrix3<f64>,
}

/// Cartesian component selector for point constraints and tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }
}

/// A holonomic constraint `f_c(q) = c`.
#[derive(Debug, Clone)]
pub enum ConstraintDef {
    /// `coeffs * q = target`, one row per output.
    JointLinear {
        coeffs: DMatrix<f64>,
        target: DVector<f64>,
    },
    /// Selected world components of a point fixed on a link.
    FramePoint {
        link: usize,
        point: Vector3<f64>,
        axes: Vec<Axis>,
        target: DVector<f64>,
    },
}

impl ConstraintDef {
    pub fn rows(&self) -> usize {
        match self {
            ConstraintDef::JointLinear { coeffs, .. } => coeffs.nrows(),
            ConstraintDef::FramePoint { axes, .. } => axes.len(),
        }
    }

    pub fn target(&self) -> &DVector<f64> {
        match self {
            ConstraintDef::JointLinear { target, .. } => target,
            ConstraintDef::FramePoint { target, .. } => target,
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, ConstraintDef::JointLinear { .. })
    }
}

/// World poses of every link frame for one configuration.
#[derive(Debug, Clone)]
pub struct Poses {
    pub rotation: Vec<Matrix3<f64>>,
    pub origin: Vec<Vector3<f64>>,
    /// Joint axes in world coordinates.
    pub axis: Vec<Vector3<f64>>,
}

#[derive(Debug, Clone)]
pub struct RobotModel {
    pub name: String,
    pub joints: Vec<Joint>,
    pub links: Vec<Link>,
    pub actuated: Vec<usize>,
    pub constraints: Vec<ConstraintDef>,
    pub gravity: Vector3<f64>,
    /// `ancestors[i]` lists the joints whose motion moves link `i` (including `i`).
    ancestors: Vec<Vec<usize>>,
}

impl RobotModel {
    pub fn new(
        name: impl Into<String>,
        joints: Vec<Joint>,
        links: Vec<Link>,
        actuated: Vec<usize>,
        constraints: Vec<ConstraintDef>,
        gravity: Vector3<f64>,
    ) -> Result<Self> {
        let mut joints = joints;
        for j in joints.iter_mut() {
            let norm = j.axis.norm();
            if !(norm > 0.0) || !norm.is_finite() {
                return Err(Error::invalid(format!("joint '{}' has a zero axis", j.name)));
            }
            j.axis /= norm;
        }
        let n = joints.len();
        let mut ancestors = Vec::with_capacity(n);
        for (i, j) in joints.iter().enumerate() {
            if let Some(p) = j.parent {
                if p >= i {
                    return Err(Error::invalid(format!(
                        "joint {i}: parent {p} must precede its child"
                    )));
                }
            }
            let mut chain = vec![i];
            let mut cur = j.parent;
            while let Some(p) = cur {
                chain.push(p);
                cur = joints[p].parent;
            }
            chain.reverse();
            ancestors.push(chain);
        }
        let model = RobotModel {
            name: name.into(),
            joints,
            links,
            actuated,
            constraints,
            gravity,
            ancestors,
        };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<()> {
        let n = self.n();
        if n == 0 {
            return Err(Error::invalid("model has no joints"));
        }
        if self.links.len() != n {
            return Err(Error::invalid(format!(
                "links: expected {n} entries, found {}",
                self.links.len()
            )));
        }
        if self.actuated.len() > n {
            return Err(Error::invalid("actuated: more actuated joints than joints"));
        }
        let mut seen = vec![false; n];
        for &a in &self.actuated {
            if a >= n {
                return Err(Error::invalid(format!("actuated: index {a} out of range")));
            }
            if seen[a] {
                return Err(Error::invalid(format!("actuated: index {a} repeated")));
            }
            seen[a] = true;
        }
        for (i, l) in self.links.iter().enumerate() {
            if !(l.mass > 0.0) || !l.mass.is_finite() {
                return Err(Error::invalid(format!(
                    "links[{i}].mass: must be positive, got {}",
                    l.mass
                )));
            }
            if (l.inertia - l.inertia.transpose()).amax() > 1e-12 {
                return Err(Error::invalid(format!("links[{i}].inertia: not symmetric")));
            }
            let min_eig = l.inertia.symmetric_eigenvalues().min();
            if min_eig < -1e-12 {
                return Err(Error::invalid(format!(
                    "links[{i}].inertia: not positive semi-definite"
                )));
            }
        }
        for (k, c) in self.constraints.iter().enumerate() {
            if c.rows() == 0 {
                return Err(Error::invalid(format!("constraints[{k}]: no rows")));
            }
            if c.target().len() != c.rows() {
                return Err(Error::invalid(format!(
                    "constraints[{k}].target: expected {} values, found {}",
                    c.rows(),
                    c.target().len()
                )));
            }
            match c {
                ConstraintDef::JointLinear { coeffs, .. } => {
                    if coeffs.ncols() != n {
                        return Err(Error::invalid(format!(
                            "constraints[{k}].coeffs: rows must have {n} entries"
                        )));
                    }
                }
                ConstraintDef::FramePoint { link, .. } => {
                    if *link >= n {
                        return Err(Error::invalid(format!(
                            "constraints[{k}].link: index {link} out of range"
                        )));
                    }
                }
            }
        }
        if self.nc() >= n {
            return Err(Error::invalid(format!(
                "constraints: {} rows leave no free motion for {n} joints",
                self.nc()
            )));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.joints.len()
    }

    pub fn m(&self) -> usize {
        self.actuated.len()
    }

    pub fn nc(&self) -> usize {
        self.constraints.iter().map(|c| c.rows()).sum()
    }

    /// Actuation selection matrix `U` (m x n).
    pub fn selection(&self) -> DMatrix<f64> {
        linalg::selection(&self.actuated, self.n())
    }

    pub fn ancestors(&self, link: usize) -> &[usize] {
        &self.ancestors[link]
    }

    pub fn link_index(&self, name: &str) -> Option<usize> {
        self.links.iter().position(|l| l.name == name)
    }

    pub fn poses(&self, q: &DVector<f64>) -> Poses {
        let n = self.n();
        let mut rotation = Vec::with_capacity(n);
        let mut origin = Vec::with_capacity(n);
        let mut axis = Vec::with_capacity(n);
        for (i, j) in self.joints.iter().enumerate() {
            let (r_p, o_p) = match j.parent {
                Some(p) => (rotation[p], origin[p]),
                None => (Matrix3::identity(), Vector3::zeros()),
            };
            let r_off = r_p * j.offset_rotation().into_inner();
            let o_joint = o_p + r_p * j.offset_xyz;
            let z = r_off * j.axis;
            let (r, o) = match j.kind {
                JointKind::Revolute => {
                    let rot = Rotation3::from_axis_angle(&Unit::new_unchecked(j.axis), q[i]);
                    (r_off * rot.into_inner(), o_joint)
                }
                JointKind::Prismatic => (r_off, o_joint + z * q[i]),
            };
            rotation.push(r);
            origin.push(o);
            axis.push(z);
        }
        Poses {
            rotation,
            origin,
            axis,
        }
    }

    pub fn point_position(&self, poses: &Poses, link: usize, point: &Vector3<f64>) -> Vector3<f64> {
        poses.origin[link] + poses.rotation[link] * point
    }

    /// Linear Jacobian (3 x n) of a point fixed on `link`.
    pub fn point_jacobian(&self, poses: &Poses, link: usize, point: &Vector3<f64>) -> DMatrix<f64> {
        let p = self.point_position(poses, link, point);
        let mut jac = DMatrix::zeros(3, self.n());
        for &j in self.ancestors(link) {
            let z = poses.axis[j];
            let col = match self.joints[j].kind {
                JointKind::Revolute => z.cross(&(p - poses.origin[j])),
                JointKind::Prismatic => z,
            };
            jac.fixed_view_mut::<3, 1>(0, j).copy_from(&col);
        }
        jac
    }

    /// Constraint outputs `f_c(q)` stacked over all constraint definitions.
    pub fn constraint_value(&self, q: &DVector<f64>) -> DVector<f64> {
        let poses = self.poses(q);
        let mut out = DVector::zeros(self.nc());
        let mut r = 0;
        for c in &self.constraints {
            match c {
                ConstraintDef::JointLinear { coeffs, .. } => {
                    out.rows_mut(r, coeffs.nrows()).copy_from(&(coeffs * q));
                }
                ConstraintDef::FramePoint {
                    link, point, axes, ..
                } => {
                    let p = self.point_position(&poses, *link, point);
                    for (k, a) in axes.iter().enumerate() {
                        out[r + k] = p[a.index()];
                    }
                }
            }
            r += c.rows();
        }
        out
    }

    pub fn constraint_target(&self) -> DVector<f64> {
        let parts: Vec<&DVector<f64>> = self.constraints.iter().map(|c| c.target()).collect();
        linalg::vstack_vec(&parts)
    }

    /// `f_c(q) - c`.
    pub fn constraint_residual(&self, q: &DVector<f64>) -> DVector<f64> {
        self.constraint_value(q) - self.constraint_target()
    }

    pub fn constraint_jacobian(&self, q: &DVector<f64>) -> DMatrix<f64> {
        let poses = self.poses(q);
        self.constraint_jacobian_at(&poses)
    }

    fn constraint_jacobian_at(&self, poses: &Poses) -> DMatrix<f64> {
        let n = self.n();
        let mut out = DMatrix::zeros(self.nc(), n);
        let mut r = 0;
        for c in &self.constraints {
            match c {
                ConstraintDef::JointLinear { coeffs, .. } => {
                    out.view_mut((r, 0), (coeffs.nrows(), n)).copy_from(coeffs);
                }
                ConstraintDef::FramePoint {
                    link, point, axes, ..
                } => {
                    let jac = self.point_jacobian(poses, *link, point);
                    for (k, a) in axes.iter().enumerate() {
                        out.row_mut(r + k).copy_from(&jac.row(a.index()));
                    }
                }
            }
            r += c.rows();
        }
        out
    }

    /// Time derivative of the constraint Jacobian along `qd`.
    ///
    /// Linear constraints contribute exact zeros; point constraints use a
    /// central difference of the Jacobian over `q +- h qd`.
    pub fn constraint_jacobian_dot(&self, q: &DVector<f64>, qd: &DVector<f64>) -> DMatrix<f64> {
        let n = self.n();
        let mut out = DMatrix::zeros(self.nc(), n);
        if self.constraints.iter().all(|c| c.is_linear()) {
            return out;
        }
        let h = JDOT_FD_STEP;
        let jp = self.constraint_jacobian(&(q + qd * h));
        let jm = self.constraint_jacobian(&(q - qd * h));
        let fd = (jp - jm) / (2.0 * h);
        let mut r = 0;
        for c in &self.constraints {
            if !c.is_linear() {
                out.view_mut((r, 0), (c.rows(), n))
                    .copy_from(&fd.view((r, 0), (c.rows(), n)));
            }
            r += c.rows();
        }
        out
    }

    /// Loads a model from a TOML model file.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::ModelFile(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: ModelFile =
            toml::from_str(text).map_err(|e| Error::ModelFile(e.to_string()))?;
        file.into_model()
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(&ModelFile::from_model(self)).expect("model serializes")
    }
}

// ---------------------------------------------------------------------------
// Model file schema

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    #[serde(default)]
    pub name: String,
    pub n: usize,
    pub gravity: [f64; 3],
    pub actuated: Vec<usize>,
    pub joints: Vec<JointSpec>,
    pub links: Vec<LinkSpec>,
    #[serde(default)]
    pub constraints: Vec<ConstraintSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointSpec {
    #[serde(default)]
    pub name: String,
    #[serde(default = "default_kind")]
    pub kind: JointKind,
    pub axis: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<usize>,
    #[serde(default)]
    pub offset_xyz: [f64; 3],
    #[serde(default)]
    pub offset_rpy: [f64; 3],
}

fn default_kind() -> JointKind {
    JointKind::Revolute
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSpec {
    #[serde(default)]
    pub name: String,
    pub mass: f64,
    pub com_xyz: [f64; 3],
    /// `[ixx, iyy, izz, ixy, ixz, iyz]` about the center of mass.
    pub inertia_6: [f64; 6],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConstraintSpec {
    JointLinear {
        coeffs: Vec<Vec<f64>>,
        /// Optional subset of coefficient rows to keep.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rows: Option<Vec<usize>>,
        target: Vec<f64>,
    },
    FramePoint {
        link: usize,
        point: [f64; 3],
        rows: Vec<Axis>,
        target: Vec<f64>,
    },
}

impl ModelFile {
    pub fn into_model(self) -> Result<RobotModel> {
        if self.joints.len() != self.n {
            return Err(Error::invalid(format!(
                "joints: n = {} but {} joints listed",
                self.n,
                self.joints.len()
            )));
        }
        let joints = self
            .joints
            .iter()
            .enumerate()
            .map(|(i, j)| Joint {
                name: if j.name.is_empty() { format!("joint{i}") } else { j.name.clone() },
                kind: j.kind,
                axis: Vector3::from(j.axis),
                parent: j.parent,
                offset_xyz: Vector3::from(j.offset_xyz),
                offset_rpy: Vector3::from(j.offset_rpy),
            })
            .collect();
        let links = self
            .links
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let [ixx, iyy, izz, ixy, ixz, iyz] = l.inertia_6;
                Link {
                    name: if l.name.is_empty() { format!("link{i}") } else { l.name.clone() },
                    mass: l.mass,
                    com: Vector3::from(l.com_xyz),
                    inertia: Matrix3::new(ixx, ixy, ixz, ixy, iyy, iyz, ixz, iyz, izz),
                }
            })
            .collect();
        let mut constraints = Vec::with_capacity(self.constraints.len());
        for (k, c) in self.constraints.into_iter().enumerate() {
            constraints.push(match c {
                ConstraintSpec::JointLinear {
                    coeffs,
                    rows,
                    target,
                } => {
                    let keep: Vec<usize> = rows.unwrap_or_else(|| (0..coeffs.len()).collect());
                    let mut mat = DMatrix::zeros(keep.len(), self.n);
                    for (r, &src) in keep.iter().enumerate() {
                        let row = coeffs.get(src).ok_or_else(|| {
                            Error::invalid(format!("constraints[{k}].rows: index {src} out of range"))
                        })?;
                        if row.len() != self.n {
                            return Err(Error::invalid(format!(
                                "constraints[{k}].coeffs[{src}]: expected {} entries",
                                self.n
                            )));
                        }
                        for (c, v) in row.iter().enumerate() {
                            mat[(r, c)] = *v;
                        }
                    }
                    ConstraintDef::JointLinear {
                        coeffs: mat,
                        target: DVector::from_vec(target),
                    }
                }
                ConstraintSpec::FramePoint {
                    link,
                    point,
                    rows,
                    target,
                } => ConstraintDef::FramePoint {
                    link,
                    point: Vector3::from(point),
                    axes: rows,
                    target: DVector::from_vec(target),
                },
            });
        }
        RobotModel::new(
            self.name,
            joints,
            links,
            self.actuated,
            constraints,
            Vector3::from(self.gravity),
        )
    }

    pub fn from_model(model: &RobotModel) -> Self {
        ModelFile {
            name: model.name.clone(),
            n: model.n(),
            gravity: model.gravity.into(),
            actuated: model.actuated.clone(),
            joints: model
                .joints
                .iter()
                .map(|j| JointSpec {
                    name: j.name.clone(),
                    kind: j.kind,
                    axis: j.axis.into(),
                    parent: j.parent,
                    offset_xyz: j.offset_xyz.into(),
                    offset_rpy: j.offset_rpy.into(),
                })
                .collect(),
            links: model
                .links
                .iter()
                .map(|l| LinkSpec {
                    name: l.name.clone(),
                    mass: l.mass,
                    com_xyz: l.com.into(),
                    inertia_6: [
                        l.inertia[(0, 0)],
                        l.inertia[(1, 1)],
                        l.inertia[(2, 2)],
                        l.inertia[(0, 1)],
                        l.inertia[(0, 2)],
                        l.inertia[(1, 2)],
                    ],
                })
                .collect(),
            constraints: model
                .constraints
                .iter()
                .map(|c| match c {
                    ConstraintDef::JointLinear { coeffs, target } => ConstraintSpec::JointLinear {
                        coeffs: coeffs
                            .row_iter()
                            .map(|r| r.iter().cloned().collect())
                            .collect(),
                        rows: None,
                        target: target.iter().cloned().collect(),
                    },
                    ConstraintDef::FramePoint {
                        link,
                        point,
                        axes,
                        target,
                    } => ConstraintSpec::FramePoint {
                        link: *link,
                        point: (*point).into(),
                        rows: axes.clone(),
                        target: target.iter().cloned().collect(),
                    },
                })
                .collect(),
        }
    }
}

// ---------------------------------------------------------------------------
// Benchmark models. All are planar chains in the x-z plane with joint axes
// along +y, hanging along -z at q = 0, gravity along -z.

pub const GRAVITY: f64 = 9.81;

fn rod(name: String, mass: f64, length: f64) -> Link {
    let i = mass * length * length / 12.0;
    Link {
        name,
        mass,
        com: Vector3::new(0.0, 0.0, -0.5 * length),
        inertia: Matrix3::new(i, 0.0, 0.0, 0.0, i, 0.0, 0.0, 0.0, 1e-4),
    }
}

fn planar_chain(lengths: &[f64], masses: &[f64]) -> (Vec<Joint>, Vec<Link>) {
    let joints = lengths
        .iter()
        .enumerate()
        .map(|(i, _)| Joint {
            name: format!("joint{i}"),
            kind: JointKind::Revolute,
            axis: Vector3::y(),
            parent: if i == 0 { None } else { Some(i - 1) },
            offset_xyz: if i == 0 {
                Vector3::zeros()
            } else {
                Vector3::new(0.0, 0.0, -lengths[i - 1])
            },
            offset_rpy: Vector3::zeros(),
        })
        .collect();
    let links = lengths
        .iter()
        .zip(masses)
        .enumerate()
        .map(|(i, (&l, &m))| rod(format!("link{i}"), m, l))
        .collect();
    (joints, links)
}

fn gravity() -> Vector3<f64> {
    Vector3::new(0.0, 0.0, -GRAVITY)
}

/// Single link of length 1 m, mass 1 kg, COM at 0.5 m; `q` measured from
/// straight down.
pub fn pendulum() -> RobotModel {
    let (joints, links) = planar_chain(&[1.0], &[1.0]);
    RobotModel::new("pendulum", joints, links, vec![0], vec![], gravity()).expect("valid")
}

/// Fully actuated, unconstrained planar 2R arm (0.5 m links, 1 kg each).
pub fn two_link_arm() -> RobotModel {
    let (joints, links) = planar_chain(&[0.5, 0.5], &[1.0, 1.0]);
    RobotModel::new("two-link-arm", joints, links, vec![0, 1], vec![], gravity()).expect("valid")
}

pub const MINI_SCORPIO_LENGTHS: [f64; 4] = [0.3, 0.3, 0.3, 0.1];

/// Reference configuration used for the point target of [`mini_scorpio_nl`].
pub fn mini_scorpio_reference_q() -> DVector<f64> {
    let d = std::f64::consts::PI / 180.0;
    DVector::from_vec(vec![-90.0 * d, 60.0 * d, -60.0 * d, 60.0 * d])
}

/// Planar 4R chain, joints 0-1 actuated, joints 2-3 passive, closed by the
/// linear loop constraints `q1 + q2 = 0` and `q2 + q3 = 0` (one
/// parallelogram: one driving joint, two passive joints).
pub fn mini_scorpio() -> RobotModel {
    let (joints, links) = planar_chain(&MINI_SCORPIO_LENGTHS, &[1.0; 4]);
    let coeffs = DMatrix::from_row_slice(2, 4, &[0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0]);
    let constraints = vec![ConstraintDef::JointLinear {
        coeffs,
        target: DVector::zeros(2),
    }];
    RobotModel::new("mini-scorpio", joints, links, vec![0, 1], constraints, gravity())
        .expect("valid")
}

/// Same chain as [`mini_scorpio`], closed instead by holding the chain's end
/// point at a fixed (x, z) location (two nonlinear rows).
pub fn mini_scorpio_nl() -> RobotModel {
    let (joints, links) = planar_chain(&MINI_SCORPIO_LENGTHS, &[1.0; 4]);
    let point = Vector3::new(0.0, 0.0, -MINI_SCORPIO_LENGTHS[3]);
    let unconstrained = RobotModel::new(
        "tmp",
        joints.clone(),
        links.clone(),
        vec![0, 1],
        vec![],
        gravity(),
    )
    .expect("valid");
    let poses = unconstrained.poses(&mini_scorpio_reference_q());
    let p = unconstrained.point_position(&poses, 3, &point);
    let constraints = vec![ConstraintDef::FramePoint {
        link: 3,
        point,
        axes: vec![Axis::X, Axis::Z],
        target: DVector::from_vec(vec![p.x, p.z]),
    }];
    RobotModel::new("mini-scorpio-nl", joints, links, vec![0, 1], constraints, gravity())
        .expect("valid")
}

/// Looks up a bundled benchmark model by name.
pub fn benchmark(name: &str) -> Option<RobotModel> {
    match name {
        "pendulum" => Some(pendulum()),
        "two-link-arm" => Some(two_link_arm()),
        "mini-scorpio" => Some(mini_scorpio()),
        "mini-scorpio-nl" => Some(mini_scorpio_nl()),
        _ => None,
    }
}

pub const BENCHMARK_NAMES: [&str; 4] = ["pendulum", "two-link-arm", "mini-scorpio", "mini-scorpio-nl"];
