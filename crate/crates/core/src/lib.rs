//! Whole-body control and convex model predictive control for underactuated,
//! holonomically constrained manipulators.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`] and [`dynamics`]: kinematic chains, rigid-body dynamics terms,
//!   constraint projections and constrained forward dynamics.
//! * [`task`] and [`wbc`]: task maps and the projection-based prioritized
//!   whole-body torque law.
//! * [`nominal`]: prioritized inverse kinematics and inverse dynamics along a
//!   horizon, producing the nominal trajectory used for linearization.
//! * [`transcription`]: linearization, discretization, stacked prediction and
//!   assembly of the finite-horizon QCQP.
//! * [`qcqp`]: a dense primal barrier interior-point solver for convex QCQPs.
//! * [`sim`]: the receding-horizon loop, closed-loop plant simulation and
//!   error metrics.

// `!(x > 0.0)`-style checks are used deliberately so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod error;
pub mod linalg;
pub mod model;
pub mod nominal;
pub mod qcqp;
pub mod sim;
pub mod task;
pub mod transcription;
pub mod wbc;

pub use dynamics::{eval_dynamics, DynamicsTerms, PlantState};
pub use error::{Error, Result};
pub use model::{ConstraintDef, RobotModel};
pub use nominal::{NominalTrajectory, TaskTrajectory};
pub use qcqp::{Qcqp, Solution, SolverSettings, SolverStatus};
pub use sim::{MpcConfig, TrajectoryLog};
pub use task::{TaskDef, TaskKind};
pub use transcription::{HierarchySpec, HorizonSpec, QcqpProblem};
pub use wbc::HierarchicalCommand;
