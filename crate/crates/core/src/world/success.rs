use serde::{Deserialize, Serialize};

use super::{InstanceId, ObjectSpec, Scene, TaskInstance, WorldError};
use crate::geometry::Vec3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NearTarget {
    Object(InstanceId),
    Region(Vec3),
}

/// One term of a success conjunction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Condition {
    ArticulationAtLeast {
        object: InstanceId,
        value: f64,
    },
    ArticulationAtMost {
        object: InstanceId,
        value: f64,
    },
    /// Object centre within `radius` of another object's centre or a point.
    Near {
        object: InstanceId,
        target: NearTarget,
        radius: f64,
    },
    /// Object centre at or above absolute height `z`.
    HeightAtLeast {
        object: InstanceId,
        z: f64,
    },
    Attached {
        object: InstanceId,
        attached: bool,
    },
}

/// Conjunction of conditions; an empty list is vacuously true.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SuccessPredicate {
    pub all: Vec<Condition>,
}

fn lookup(scene: &Scene, id: InstanceId) -> Result<&ObjectSpec, WorldError> {
    scene.object(id).ok_or(WorldError::PredicateError(id))
}

impl Condition {
    pub fn holds(&self, scene: &Scene) -> Result<bool, WorldError> {
        Ok(match *self {
            Condition::ArticulationAtLeast { object, value } => {
                lookup(scene, object)?.articulation_value >= value
            }
            Condition::ArticulationAtMost { object, value } => {
                lookup(scene, object)?.articulation_value <= value
            }
            Condition::Near {
                object,
                target,
                radius,
            } => {
                let c = lookup(scene, object)?.center();
                let goal = match target {
                    NearTarget::Object(id) => lookup(scene, id)?.center(),
                    NearTarget::Region(p) => p,
                };
                c.distance(goal) <= radius
            }
            Condition::HeightAtLeast { object, z } => lookup(scene, object)?.center().z >= z,
            Condition::Attached { object, attached } => {
                lookup(scene, object)?;
                (scene.attached_id() == Some(object)) == attached
            }
        })
    }

    fn translated(&self, t: Vec3) -> Condition {
        match *self {
            Condition::Near {
                object,
                target: NearTarget::Region(p),
                radius,
            } => Condition::Near {
                object,
                target: NearTarget::Region(p + t),
                radius,
            },
            Condition::HeightAtLeast { object, z } => {
                Condition::HeightAtLeast { object, z: z + t.z }
            }
            c => c,
        }
    }
}

impl SuccessPredicate {
    pub fn new(all: Vec<Condition>) -> Self {
        SuccessPredicate { all }
    }

    /// Every referenced id is checked even after a false term, so a bad
    /// predicate is reported regardless of scene state.
    pub fn evaluate(&self, scene: &Scene) -> Result<bool, WorldError> {
        let mut ok = true;
        for c in &self.all {
            ok &= c.holds(scene)?;
        }
        Ok(ok)
    }

    pub fn translated(&self, t: Vec3) -> SuccessPredicate {
        SuccessPredicate {
            all: self.all.iter().map(|c| c.translated(t)).collect(),
        }
    }
}

pub fn check_success(task: &TaskInstance, scene: &Scene) -> Result<bool, WorldError> {
    task.success.evaluate(scene)
}
