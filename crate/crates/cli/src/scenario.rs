//! Scenario files: parsing, validation and conversion into controller inputs.

use std::fmt;
use std::path::{Path, PathBuf};

use nalgebra::{DVector, Vector3};
use serde::{Deserialize, Serialize};
use wbcmpc::model::Axis;
use wbcmpc::nominal::{NominalOptions, DEFAULT_DIVERGENCE_BOUND};
use wbcmpc::qcqp::{SolverMode, SolverSettings};
use wbcmpc::sim::{FeedbackMode, MpcConfig, SimSettings};
use wbcmpc::transcription::{Convexification, HierarchyForm, HierarchyMode, DEFAULT_FORCE_WEIGHT};
use wbcmpc::{HierarchySpec, HorizonSpec, PlantState, RobotModel, TaskDef, TaskTrajectory};

use crate::CliError;

/// Joint angle: a plain number in radians or a unit-tagged string such as
/// `"-90 deg"` or `"1.2 rad"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Angle {
    Radians(f64),
    Tagged(String),
}

impl Angle {
    pub fn radians(&self) -> Result<f64, String> {
        match self {
            Angle::Radians(v) => Ok(*v),
            Angle::Tagged(text) => {
                let s = text.trim();
                let (num, scale) = if let Some(v) = s.strip_suffix("deg") {
                    (v, std::f64::consts::PI / 180.0)
                } else if let Some(v) = s.strip_suffix("rad") {
                    (v, 1.0)
                } else {
                    return Err(format!("'{text}' needs a 'deg' or 'rad' suffix"));
                };
                num.trim()
                    .parse::<f64>()
                    .map(|v| v * scale)
                    .map_err(|_| format!("'{text}' is not a number"))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Initial {
    pub q: Vec<Angle>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qd: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HorizonSection {
    pub t0: f64,
    pub tf: f64,
    /// Control period (s).
    pub dt: f64,
    pub np: usize,
    pub ne: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HierarchySection {
    pub mode: HierarchyMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilons: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convexification: Option<Convexification>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub form: Option<HierarchyForm>,
    /// Emit the hierarchy inequalities in the MPC subproblems.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraints: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ControllerSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feedback: Option<FeedbackMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub force_weight: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warm_start: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub divergence_bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt_sim: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baumgarte_alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baumgarte_beta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eq_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ineq_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duality_gap_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stationarity_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iters: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_init: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TaskKindName {
    #[default]
    Point,
    Joint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    #[default]
    Linear,
}

/// Scalar gain applied to every axis, or one value per axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Gain {
    Uniform(f64),
    Diagonal(Vec<f64>),
}

impl Gain {
    fn diagonal(&self, dim: usize) -> Option<DVector<f64>> {
        match self {
            Gain::Uniform(v) => Some(DVector::from_element(dim, *v)),
            Gain::Diagonal(v) if v.len() == dim => Some(DVector::from_column_slice(v)),
            Gain::Diagonal(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSection {
    pub name: String,
    pub priority: usize,
    #[serde(default)]
    pub kind: TaskKindName,
    /// Link name for point tasks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub link: Option<String>,
    /// Point in the link frame for point tasks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axes: Option<Vec<Axis>>,
    /// Joint indices for joint tasks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub joints: Option<Vec<usize>>,
    pub x_start: Vec<f64>,
    pub x_end: Vec<f64>,
    #[serde(default)]
    pub interpolation: Interpolation,
    pub kp: Gain,
    pub kv: Gain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    /// Model file, relative to the scenario file.
    pub model: PathBuf,
    pub initial: Initial,
    pub horizon: HorizonSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hierarchy: Option<HierarchySection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub controller: Option<ControllerSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim: Option<SimSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverSection>,
    pub tasks: Vec<TaskSection>,
}

/// Everything a controller run needs, fully validated.
#[derive(Debug, Clone)]
pub struct Setup {
    pub model: RobotModel,
    pub tasks: Vec<TaskDef>,
    pub trajectories: Vec<TaskTrajectory>,
    pub x0: PlantState,
    pub horizon: HorizonSpec,
    pub sim: SimSettings,
    pub mpc: MpcConfig,
}

fn field(path: impl fmt::Display, msg: impl fmt::Display) -> CliError {
    CliError::Validation(format!("{path}: {msg}"))
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Validation(format!("scenario: {e}")))
    }

    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("scenario {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes to TOML")
    }

    /// Converts the horizon section, requiring `dt` to divide `tf - t0`.
    pub fn horizon_spec(&self) -> Result<HorizonSpec, CliError> {
        let h = &self.horizon;
        if !(h.dt > 0.0) || !h.dt.is_finite() {
            return Err(field("horizon.dt", format!("must be positive, found {}", h.dt)));
        }
        let span = h.tf - h.t0;
        let steps = (span / h.dt).round();
        if !(steps >= 1.0) || (steps * h.dt - span).abs() > 1e-9 * span.abs().max(1.0) {
            return Err(field(
                "horizon.dt",
                format!("{} does not divide tf - t0 = {span}", h.dt),
            ));
        }
        let spec = HorizonSpec {
            t0: h.t0,
            tf: h.tf,
            n: steps as usize,
            np: h.np,
            ne: h.ne,
        };
        spec.validate().map_err(|e| field("horizon", e))?;
        Ok(spec)
    }

    fn task_defs(&self, model: &RobotModel) -> Result<Vec<TaskDef>, CliError> {
        if self.tasks.is_empty() {
            return Err(field("tasks", "at least one task is required"));
        }
        self.tasks
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let path = format!("tasks[{i}]");
                let mut def = match t.kind {
                    TaskKindName::Point => {
                        let link_name = t
                            .link
                            .as_deref()
                            .ok_or_else(|| field(format!("{path}.link"), "required for point tasks"))?;
                        let link = model
                            .link_index(link_name)
                            .ok_or_else(|| field(format!("{path}.link"), format!("unknown link '{link_name}'")))?;
                        let p = t.point.unwrap_or([0.0; 3]);
                        let axes = t.axes.clone().unwrap_or_else(|| vec![Axis::X, Axis::Y, Axis::Z]);
                        if axes.is_empty() {
                            return Err(field(format!("{path}.axes"), "must not be empty"));
                        }
                        TaskDef::point(&t.name, link, Vector3::new(p[0], p[1], p[2]), axes, 0.0, 0.0, t.priority)
                    }
                    TaskKindName::Joint => {
                        let joints = t
                            .joints
                            .clone()
                            .ok_or_else(|| field(format!("{path}.joints"), "required for joint tasks"))?;
                        if let Some(&j) = joints.iter().find(|&&j| j >= model.n()) {
                            return Err(field(
                                format!("{path}.joints"),
                                format!("index {j} out of range for {} joints", model.n()),
                            ));
                        }
                        TaskDef::joint(&t.name, joints, 0.0, 0.0, t.priority)
                    }
                };
                let dim = def.kp.len();
                def.kp = t
                    .kp
                    .diagonal(dim)
                    .ok_or_else(|| field(format!("{path}.kp"), format!("expected {dim} values")))?;
                def.kv = t
                    .kv
                    .diagonal(dim)
                    .ok_or_else(|| field(format!("{path}.kv"), format!("expected {dim} values")))?;
                for (name, v) in [("x_start", &t.x_start), ("x_end", &t.x_end)] {
                    if v.len() != dim {
                        return Err(field(
                            format!("{path}.{name}"),
                            format!("expected {dim} values, found {}", v.len()),
                        ));
                    }
                }
                Ok(def)
            })
            .collect()
    }

    fn initial_state(&self, model: &RobotModel) -> Result<PlantState, CliError> {
        let n = model.n();
        if self.initial.q.len() != n {
            return Err(field("initial.q", format!("expected {n} values, found {}", self.initial.q.len())));
        }
        let q: Vec<f64> = self
            .initial
            .q
            .iter()
            .enumerate()
            .map(|(i, a)| a.radians().map_err(|e| field(format!("initial.q[{i}]"), e)))
            .collect::<Result<_, _>>()?;
        let qd = match &self.initial.qd {
            None => vec![0.0; n],
            Some(v) if v.len() == n => v.clone(),
            Some(v) => return Err(field("initial.qd", format!("expected {n} values, found {}", v.len()))),
        };
        Ok(PlantState {
            q: DVector::from_vec(q),
            qd: DVector::from_vec(qd),
        })
    }

    fn hierarchy_spec(&self, n_tasks: usize) -> Result<(HierarchySpec, bool), CliError> {
        let mut spec = HierarchySpec::weak(n_tasks);
        let mut constraints = true;
        if let Some(h) = &self.hierarchy {
            spec.mode = h.mode;
            if let Some(e) = &h.epsilons {
                spec.epsilons = e.clone();
            }
            if let Some(c) = h.convexification {
                spec.convexification = c;
            }
            if let Some(f) = h.form {
                spec.form = f;
            }
            if let Some(c) = h.constraints {
                constraints = c;
            }
        }
        spec.validate(n_tasks).map_err(|e| field("hierarchy", e))?;
        Ok((spec, constraints))
    }

    fn sim_settings(&self) -> SimSettings {
        let mut sim = SimSettings::default();
        if let Some(s) = &self.sim {
            sim.dt_sim = s.dt_sim.unwrap_or(sim.dt_sim);
            sim.baumgarte_alpha = s.baumgarte_alpha.unwrap_or(sim.baumgarte_alpha);
            sim.baumgarte_beta = s.baumgarte_beta.unwrap_or(sim.baumgarte_beta);
        }
        sim
    }

    fn solver_settings(&self) -> SolverSettings {
        let mut s = SolverSettings::default();
        if let Some(o) = &self.solver {
            s.eq_tol = o.eq_tol.unwrap_or(s.eq_tol);
            s.ineq_tol = o.ineq_tol.unwrap_or(s.ineq_tol);
            s.duality_gap_tol = o.duality_gap_tol.unwrap_or(s.duality_gap_tol);
            s.stationarity_tol = o.stationarity_tol.unwrap_or(s.stationarity_tol);
            s.max_iters = o.max_iters.unwrap_or(s.max_iters);
            s.t_init = o.t_init.unwrap_or(s.t_init);
            s.mu = o.mu.unwrap_or(s.mu);
        }
        s.mode = SolverMode::Convex;
        s
    }

    /// Validates the scenario and builds the controller inputs. `base` is
    /// the directory the model path is relative to.
    pub fn setup(&self, base: &Path) -> Result<Setup, CliError> {
        let model_path = base.join(&self.model);
        let model = RobotModel::from_file(&model_path).map_err(|e| field("model", e))?;
        let horizon = self.horizon_spec()?;
        let tasks = self.task_defs(&model)?;
        let mut priorities: Vec<usize> = tasks.iter().map(|t| t.priority).collect();
        priorities.sort_unstable();
        if priorities.iter().enumerate().any(|(i, &p)| p != i + 1) {
            return Err(field("tasks", "priorities must be exactly 1..=number of tasks"));
        }
        let trajectories: Vec<TaskTrajectory> = self
            .tasks
            .iter()
            .map(|t| {
                TaskTrajectory::linear(
                    &DVector::from_column_slice(&t.x_start),
                    &DVector::from_column_slice(&t.x_end),
                    horizon.t0,
                    horizon.tf,
                    horizon.n,
                )
            })
            .collect();
        for (i, (t, tr)) in tasks.iter().zip(&trajectories).enumerate() {
            tr.validate(t, horizon.n).map_err(|e| field(format!("tasks[{i}]"), e))?;
        }
        let x0 = self.initial_state(&model)?;
        let sim = self.sim_settings();
        sim.validate(horizon.dt()).map_err(|e| field("sim", e))?;

        let (hierarchy, hierarchy_constraints) = self.hierarchy_spec(tasks.len())?;
        let controller = self.controller.clone().unwrap_or_default();
        let force_weight = controller.force_weight.unwrap_or(DEFAULT_FORCE_WEIGHT);
        if !(force_weight > 0.0) {
            return Err(field("controller.force_weight", "must be positive"));
        }
        let divergence_bound = controller.divergence_bound.unwrap_or(DEFAULT_DIVERGENCE_BOUND);
        if !(divergence_bound > 0.0) {
            return Err(field("controller.divergence_bound", "must be positive"));
        }
        let solver = self.solver_settings();
        solver.validate().map_err(|e| field("solver", e))?;
        let mpc = MpcConfig {
            horizon,
            hierarchy,
            hierarchy_constraints,
            feedback: controller.feedback.unwrap_or_default(),
            solver,
            force_weight,
            sim,
            nominal: NominalOptions {
                divergence_bound,
                ..NominalOptions::default()
            },
            warm_start: controller.warm_start.unwrap_or(true),
        };
        Ok(Setup {
            model,
            tasks,
            trajectories,
            x0,
            horizon,
            sim,
            mpc,
        })
    }
}

/// Loads and validates a scenario file.
pub fn load(path: &Path) -> Result<(Scenario, Setup), CliError> {
    let scenario = Scenario::from_file(path)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let setup = scenario.setup(base)?;
    Ok((scenario, setup))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn angles_accept_unit_tags() {
        let deg = std::f64::consts::PI / 180.0;
        assert_eq!(Angle::Radians(0.5).radians().unwrap(), 0.5);
        assert!((Angle::Tagged("-90 deg".into()).radians().unwrap() + 90.0 * deg).abs() < 1e-15);
        assert_eq!(Angle::Tagged("1.5rad".into()).radians().unwrap(), 1.5);
        assert!(Angle::Tagged("12".into()).radians().is_err());
        assert!(Angle::Tagged("x deg".into()).radians().is_err());
    }

    #[test]
    fn horizon_requires_a_dividing_period() {
        let text = r#"
            name = "t"
            model = "m.toml"
            tasks = []
            [initial]
            q = [0.0]
            [horizon]
            t0 = 0.0
            tf = 0.8
            dt = 0.03
            np = 10
            ne = 4
        "#;
        let s = Scenario::from_toml_str(text).unwrap();
        let err = s.horizon_spec().unwrap_err().to_string();
        assert!(err.contains("horizon.dt"), "{err}");
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = r#"
            name = "t"
            model = "m.toml"
            tasks = []
            colour = "red"
            [initial]
            q = [0.0]
            [horizon]
            t0 = 0.0
            tf = 0.8
            dt = 0.01
            np = 10
            ne = 4
        "#;
        assert!(matches!(Scenario::from_toml_str(text), Err(CliError::Validation(_))));
    }
}
