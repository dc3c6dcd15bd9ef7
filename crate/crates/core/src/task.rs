//! Prioritized operational tasks: forward maps, Jacobians and the PD law.

use nalgebra::{DMatrix, DVector, Vector3};

use crate::error::{Error, Result};
use crate::model::{Axis, RobotModel, JDOT_FD_STEP};

#[derive(Debug, Clone, PartialEq)]
pub enum TaskKind {
    /// Selected world components of a point fixed on a link.
    Point {
        link: usize,
        point: Vector3<f64>,
        axes: Vec<Axis>,
    },
    /// Selected joint coordinates.
    Joint { indices: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskDef {
    pub name: String,
    pub kind: TaskKind,
    /// Diagonal of the proportional gain.
    pub kp: DVector<f64>,
    /// Diagonal of the derivative gain.
    pub kv: DVector<f64>,
    /// 1 is the highest priority.
    pub priority: usize,
}

impl TaskDef {
    pub fn point(
        name: impl Into<String>,
        link: usize,
        point: Vector3<f64>,
        axes: Vec<Axis>,
        kp: f64,
        kv: f64,
        priority: usize,
    ) -> Self {
        let d = axes.len();
        TaskDef {
            name: name.into(),
            kind: TaskKind::Point { link, point, axes },
            kp: DVector::from_element(d, kp),
            kv: DVector::from_element(d, kv),
            priority,
        }
    }

    pub fn joint(name: impl Into<String>, indices: Vec<usize>, kp: f64, kv: f64, priority: usize) -> Self {
        let d = indices.len();
        TaskDef {
            name: name.into(),
            kind: TaskKind::Joint { indices },
            kp: DVector::from_element(d, kp),
            kv: DVector::from_element(d, kv),
            priority,
        }
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            TaskKind::Point { axes, .. } => axes.len(),
            TaskKind::Joint { indices } => indices.len(),
        }
    }

    pub fn validate(&self, model: &RobotModel) -> Result<()> {
        let name = &self.name;
        if self.dim() == 0 {
            return Err(Error::invalid(format!("task '{name}': empty output")));
        }
        match &self.kind {
            TaskKind::Point { link, .. } if *link >= model.n() => {
                return Err(Error::invalid(format!("task '{name}': link {link} out of range")));
            }
            TaskKind::Joint { indices } if indices.iter().any(|&i| i >= model.n()) => {
                return Err(Error::invalid(format!("task '{name}': joint index out of range")));
            }
            _ => {}
        }
        if self.kp.len() != self.dim() || self.kv.len() != self.dim() {
            return Err(Error::invalid(format!(
                "task '{name}': gains must have {} entries",
                self.dim()
            )));
        }
        if self
            .kp
            .iter()
            .chain(self.kv.iter())
            .any(|g| !(*g >= 0.0) || !g.is_finite())
        {
            return Err(Error::invalid(format!("task '{name}': gains must be nonnegative")));
        }
        Ok(())
    }

    /// Task position `x = f(q)`.
    pub fn position(&self, model: &RobotModel, q: &DVector<f64>) -> DVector<f64> {
        match &self.kind {
            TaskKind::Point { link, point, axes } => {
                let p = model.point_position(&model.poses(q), *link, point);
                DVector::from_iterator(axes.len(), axes.iter().map(|a| p[a.index()]))
            }
            TaskKind::Joint { indices } => {
                DVector::from_iterator(indices.len(), indices.iter().map(|&i| q[i]))
            }
        }
    }

    pub fn jacobian(&self, model: &RobotModel, q: &DVector<f64>) -> DMatrix<f64> {
        let n = model.n();
        match &self.kind {
            TaskKind::Point { link, point, axes } => {
                let full = model.point_jacobian(&model.poses(q), *link, point);
                let mut out = DMatrix::zeros(axes.len(), n);
                for (r, a) in axes.iter().enumerate() {
                    out.row_mut(r).copy_from(&full.row(a.index()));
                }
                out
            }
            TaskKind::Joint { indices } => crate::linalg::selection(indices, n),
        }
    }

    /// `J̇ q̇`, via a central difference of `J` along `q̇` (zero for joint tasks).
    pub fn jacobian_dot_qd(&self, model: &RobotModel, q: &DVector<f64>, qd: &DVector<f64>) -> DVector<f64> {
        match &self.kind {
            TaskKind::Joint { indices } => DVector::zeros(indices.len()),
            TaskKind::Point { .. } => {
                let h = JDOT_FD_STEP;
                let jp = self.jacobian(model, &(q + qd * h));
                let jm = self.jacobian(model, &(q - qd * h));
                (jp - jm) / (2.0 * h) * qd
            }
        }
    }
}

/// Checks task dimensions and that priorities are distinct and contiguous
/// from 1; returns the tasks sorted by priority.
pub fn ordered_tasks(model: &RobotModel, tasks: &[TaskDef]) -> Result<Vec<TaskDef>> {
    if tasks.is_empty() {
        return Err(Error::invalid("task set is empty"));
    }
    for t in tasks {
        t.validate(model)?;
    }
    let mut sorted = tasks.to_vec();
    sorted.sort_by_key(|t| t.priority);
    for (i, t) in sorted.iter().enumerate() {
        if t.priority != i + 1 {
            return Err(Error::invalid(format!(
                "task priorities must be distinct and contiguous from 1 (task '{}' has {})",
                t.name, t.priority
            )));
        }
    }
    Ok(sorted)
}

/// PD task acceleration `ẍᵈ = Kp (xᵈ - x) + Kv (ẋᵈ - ẋ)` with diagonal gains.
pub fn pd_task_accel(
    task: &TaskDef,
    x_des: &DVector<f64>,
    xd_des: &DVector<f64>,
    x: &DVector<f64>,
    xd: &DVector<f64>,
) -> DVector<f64> {
    task.kp.component_mul(&(x_des - x)) + task.kv.component_mul(&(xd_des - xd))
}
