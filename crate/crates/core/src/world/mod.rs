//! Kinematic tabletop simulator: scenes, articulated objects, a free-flying
//! gripper, rigid attachment and declarative success predicates.

mod config;
pub mod family;
mod sim;
mod success;
mod types;

pub use config::WorldConfig;
pub use sim::{execute_trajectory, rollout, step_to};
pub use success::{check_success, Condition, NearTarget, SuccessPredicate};
pub use types::{
    Articulation, Attachment, Category, Color, GripperState, InstanceId, ObjectSpec, Scene, Shape,
    Trajectory,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec3;

/// A task: scene, structured description and what counts as done.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskInstance {
    pub task_id: String,
    pub description: String,
    pub scene: Scene,
    pub success: SuccessPredicate,
}

impl TaskInstance {
    /// Rigidly shifts the scene and every spatial term of the predicate.
    pub fn translated(&self, t: Vec3) -> TaskInstance {
        TaskInstance {
            task_id: self.task_id.clone(),
            description: self.description.clone(),
            scene: self.scene.translated(t),
            success: self.success.translated(t),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WorldError {
    #[error("trajectory has no steps")]
    EmptyTrajectory,
    #[error("step {step} moves {length:.4} m, more than the allowed step length")]
    StepTooLong { step: usize, length: f64 },
    #[error("target {position:?} is outside the workspace")]
    WorkspaceViolation { position: Vec3 },
    #[error("target at z = {z} is below the table")]
    TableCollision { z: f64 },
    #[error("collision with object {id}")]
    Collision { id: InstanceId },
    #[error("object {id} is invalid: {reason}")]
    InvalidObject { id: InstanceId, reason: String },
    #[error("instance id {0} appears more than once")]
    DuplicateInstance(InstanceId),
    #[error("unknown instance id {0}")]
    UnknownInstance(InstanceId),
    #[error("aperture {0} outside [0, 1]")]
    InvalidAperture(f64),
    #[error("success predicate references unknown instance {0}")]
    PredicateError(InstanceId),
}

/// A [`WorldError`] raised while executing step `step` of a trajectory.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("step {step}: {error}")]
pub struct ExecutionError {
    pub step: usize,
    pub error: WorldError,
}
