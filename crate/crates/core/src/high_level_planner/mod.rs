//! Test-time high-level agent: structured task descriptions become skill
//! plans whose object queries are grounded against the current observation.

mod parser;

pub use parser::{parse_task, unparse, ParseError};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec3;
use crate::low_level_policy::SkillEmbedding;
use crate::sensing::{lift_mask, LabeledCloud};
use crate::skill_discovery::SkillLabel;
use crate::world::{InstanceId, Scene};

token_enum!(Attribute {
    Color => "color",
    Size => "size",
});

token_enum!(Qualifier {
    Leftmost => "leftmost",
    Rightmost => "rightmost",
    Nearest => "nearest",
    Farthest => "farthest",
});

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectQuery {
    pub category: String,
    pub attributes: Vec<(Attribute, String)>,
    pub qualifier: Option<Qualifier>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkillPlan {
    pub steps: Vec<(SkillLabel, ObjectQuery)>,
}

impl SkillPlan {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroundedStep {
    pub label: SkillLabel,
    pub target: InstanceId,
    pub embedding: SkillEmbedding,
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GroundingError {
    #[error("no object matches the query")]
    NoMatch,
    #[error("{count} objects match the query")]
    Ambiguous { count: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlannerError {
    #[error("plan has {len} steps, cursor {cursor} is past the end")]
    PlanExhausted { cursor: usize, len: usize },
    #[error("step {cursor}: {error}")]
    Grounding {
        cursor: usize,
        error: GroundingError,
    },
}

/// Resolves `query` to one instance visible in `cloud`.
///
/// Candidates match the category and every attribute. A qualifier picks among
/// them by the centroid of each candidate's observed points; ties go to the
/// lowest instance id.
pub fn ground_object(
    query: &ObjectQuery,
    cloud: &LabeledCloud,
    scene: &Scene,
) -> Result<InstanceId, GroundingError> {
    let mut candidates: Vec<InstanceId> = scene
        .objects
        .iter()
        .filter(|o| o.category.token() == query.category)
        .filter(|o| {
            query.attributes.iter().all(|(k, v)| match k {
                Attribute::Color => o.color.token() == v,
                Attribute::Size => o.size_class() == v,
            })
        })
        .map(|o| o.instance_id)
        .filter(|id| cloud.contains_label(*id))
        .collect();
    candidates.sort_unstable();
    candidates.dedup();
    match (candidates.len(), query.qualifier) {
        (0, _) => Err(GroundingError::NoMatch),
        (1, _) => Ok(candidates[0]),
        (count, None) => Err(GroundingError::Ambiguous { count }),
        (_, Some(q)) => {
            let gripper = scene.gripper.position;
            let key = |id: InstanceId| -> f64 {
                let c = lift_mask(cloud, id)
                    .map(|m| m.centroid())
                    .unwrap_or(Vec3::ZERO);
                match q {
                    Qualifier::Leftmost => c.x,
                    Qualifier::Rightmost => -c.x,
                    Qualifier::Nearest => c.distance(gripper),
                    Qualifier::Farthest => -c.distance(gripper),
                }
            };
            let scored: Vec<(f64, InstanceId)> =
                candidates.iter().map(|&id| (key(id), id)).collect();
            let best = scored
                .iter()
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
                .map(|s| s.1);
            best.ok_or(GroundingError::NoMatch)
        }
    }
}

/// Grounds step `cursor` against the current observation.
pub fn next_step(
    plan: &SkillPlan,
    cursor: usize,
    cloud: &LabeledCloud,
    scene: &Scene,
) -> Result<GroundedStep, PlannerError> {
    let (label, query) = plan.steps.get(cursor).ok_or(PlannerError::PlanExhausted {
        cursor,
        len: plan.len(),
    })?;
    let target = ground_object(query, cloud, scene)
        .map_err(|error| PlannerError::Grounding { cursor, error })?;
    Ok(GroundedStep {
        label: *label,
        target,
        embedding: SkillEmbedding::of(*label),
    })
}
