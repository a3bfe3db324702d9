//! Closed-loop composition at test time: observe, ground the next step,
//! canonicalize, infer, un-canonicalize, connect, execute.

pub mod motion;

use serde::{Deserialize, Serialize};

use crate::evaluation::Variant;
use crate::geometry::Vec3;
use crate::high_level_planner::{next_step, parse_task, SkillPlan};
use crate::low_level_policy::{retrieve, PolicyConfig};
use crate::mix_seed;
use crate::sensing::{observe, SensingConfig, SensorNoise};
use crate::skill_discovery::{
    interface_cloud, un_canonicalize, DiscoveryConfig, SkillLabel, SkillLibrary,
};
use crate::world::InstanceId;
use crate::world::{
    check_success, step_to, GripperState, Scene, TaskInstance, Trajectory, WorldConfig,
};
use motion::{connect_skills, MotionConfig};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExecConfig {
    pub world: WorldConfig,
    pub motion: MotionConfig,
    pub sensing: SensingConfig,
    pub discovery: DiscoveryConfig,
    pub policy: PolicyConfig,
}

/// Why an episode stopped early.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EpisodeError {
    Parse {
        message: String,
    },
    Observation {
        cursor: usize,
        message: String,
    },
    Grounding {
        cursor: usize,
        message: String,
    },
    Policy {
        cursor: usize,
        message: String,
    },
    Connection {
        cursor: usize,
        message: String,
    },
    Execution {
        cursor: usize,
        step: usize,
        message: String,
    },
    Predicate {
        message: String,
    },
}

impl std::fmt::Display for EpisodeError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EpisodeError::Parse { message } | EpisodeError::Predicate { message } => {
                f.write_str(message)
            }
            EpisodeError::Observation { cursor, message }
            | EpisodeError::Grounding { cursor, message }
            | EpisodeError::Policy { cursor, message }
            | EpisodeError::Connection { cursor, message } => {
                write!(f, "skill {cursor}: {message}")
            }
            EpisodeError::Execution {
                cursor,
                step,
                message,
            } => {
                write!(f, "skill {cursor}, step {step}: {message}")
            }
        }
    }
}

/// What happened at one plan step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub skill: SkillLabel,
    pub target: InstanceId,
    /// Match distance of the retrieved entry.
    pub chamfer: f64,
    pub entry: usize,
    pub anchor: Vec3,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeResult {
    pub task_id: String,
    pub seed: u64,
    pub success: bool,
    /// Skills whose trajectory ran to the end.
    pub steps_executed: usize,
    pub log: Vec<StepLog>,
    pub error: Option<EpisodeError>,
    /// Every executed state, connections included.
    pub trajectory: Vec<GripperState>,
    pub final_scene: Scene,
}

struct Runner<'a> {
    scene: Scene,
    executed: Vec<GripperState>,
    done: usize,
    world: &'a WorldConfig,
}

impl Runner<'_> {
    fn run(&mut self, steps: &[GripperState], cursor: usize) -> Result<(), EpisodeError> {
        for (step, s) in steps.iter().enumerate() {
            self.scene =
                step_to(&self.scene, s, self.world).map_err(|e| EpisodeError::Execution {
                    cursor,
                    step,
                    message: e.to_string(),
                })?;
            self.executed.push(*s);
        }
        Ok(())
    }
}

fn plan_of(description: &str) -> Result<SkillPlan, EpisodeError> {
    // a blank description asks for nothing
    if description.trim().is_empty() {
        return Ok(SkillPlan { steps: vec![] });
    }
    parse_task(description).map_err(|e| EpisodeError::Parse {
        message: e.to_string(),
    })
}

/// Runs the plan of `task` with skills drawn from `lib`.
pub fn execute_task(
    task: &TaskInstance,
    lib: &SkillLibrary,
    variant: Variant,
    noise: &SensorNoise,
    seed: u64,
    cfg: &ExecConfig,
) -> EpisodeResult {
    let mut runner = Runner {
        scene: task.scene.clone(),
        executed: vec![],
        done: 0,
        world: &cfg.world,
    };
    let mut log = vec![];
    let outcome = run_plan(task, lib, variant, noise, seed, cfg, &mut runner, &mut log);
    let finish = |error: Option<EpisodeError>, success: bool, r: Runner| EpisodeResult {
        task_id: task.task_id.clone(),
        seed,
        success,
        steps_executed: r.done,
        log: log.clone(),
        error,
        trajectory: r.executed,
        final_scene: r.scene,
    };
    if let Err(e) = outcome {
        return finish(Some(e), false, runner);
    }
    match check_success(task, &runner.scene) {
        Ok(ok) => finish(None, ok, runner),
        Err(e) => finish(
            Some(EpisodeError::Predicate {
                message: e.to_string(),
            }),
            false,
            runner,
        ),
    }
}

#[allow(clippy::too_many_arguments)]
fn run_plan(
    task: &TaskInstance,
    lib: &SkillLibrary,
    variant: Variant,
    noise: &SensorNoise,
    seed: u64,
    cfg: &ExecConfig,
    runner: &mut Runner,
    log: &mut Vec<StepLog>,
) -> Result<(), EpisodeError> {
    let plan = plan_of(&task.description)?;
    for cursor in 0..plan.len() {
        let obs_seed = mix_seed(seed, &[cursor as u64]);
        let observation = observe(&runner.scene, noise, &cfg.sensing, obs_seed).ok_or(
            EpisodeError::Observation {
                cursor,
                message: "nothing observed".into(),
            },
        )?;
        let step = next_step(&plan, cursor, &observation, &runner.scene).map_err(|e| {
            EpisodeError::Grounding {
                cursor,
                message: e.to_string(),
            }
        })?;
        let (cloud, channel, centroid) =
            interface_cloud(variant, &observation, step.target, &cfg.discovery).map_err(|e| {
                EpisodeError::Observation {
                    cursor,
                    message: e.to_string(),
                }
            })?;
        let anchor = if variant.canonicalizes() {
            centroid
        } else {
            Vec3::ZERO
        };
        let cloud_c = cloud.translated(-anchor);
        let policy_seed = mix_seed(seed, &[cursor as u64, 1]);
        let r = retrieve(
            lib,
            step.embedding.label(),
            &cloud_c,
            channel.as_deref(),
            &cfg.policy,
            policy_seed,
        )
        .map_err(|e| EpisodeError::Policy {
            cursor,
            message: e.to_string(),
        })?;
        let traj_c = lib.entries()[r.entry].traj_c.transformed(&r.alignment);
        log.push(StepLog {
            skill: step.label,
            target: step.target,
            chamfer: r.distance,
            entry: r.entry,
            anchor,
        });
        let tau = un_canonicalize(&traj_c, anchor);
        let start = *tau.first();
        if variant.stitches() {
            let link = connect_skills(
                &runner.scene.gripper,
                &start,
                &runner.scene,
                &cfg.world,
                &cfg.motion,
            )
            .map_err(|e| EpisodeError::Connection {
                cursor,
                message: e.to_string(),
            })?;
            runner.run(&link.steps()[1..], cursor)?;
        } else {
            runner.run(&[start], cursor)?;
        }
        runner.run(tau.steps(), cursor)?;
        runner.done += 1;
    }
    Ok(())
}

/// The executed states as a trajectory, if any ran.
pub fn executed_trajectory(r: &EpisodeResult) -> Option<Trajectory> {
    Trajectory::new(r.trajectory.clone()).ok()
}
