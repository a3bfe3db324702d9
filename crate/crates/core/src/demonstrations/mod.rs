//! Scripted demonstrations, keyframe downsampling and the demo file format.

mod expert;
mod io;
mod keyframes;

pub use expert::ExpertConfig;
pub use io::{load_demos, read_demos, save_demos, write_demos, DEMO_HEADER};
pub use keyframes::{extract_keyframes, KeyframeConfig, Keyframes, TooShort};

use thiserror::Error;

use crate::executor::motion::MotionConfig;
use crate::high_level_planner::{ground_object, parse_task};
use crate::sensing::{observe, SensingConfig, SensorNoise};
use crate::world::{check_success, rollout, Scene, TaskInstance, Trajectory, WorldConfig};
use expert::Script;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DemoError {
    #[error("demonstration failed: {cause}")]
    Failure { cause: String },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

/// One expert demonstration. `frames[i]` is the scene after executing
/// `trajectory[i]`; the first step repeats the initial gripper state, so
/// `frames[0]` equals the initial scene.
#[derive(Clone, Debug, PartialEq)]
pub struct Demo {
    pub task: TaskInstance,
    pub seed: u64,
    pub trajectory: Trajectory,
    pub frames: Vec<Scene>,
    pub keyframes: Keyframes,
}

impl Demo {
    /// Replays `trajectory` from the task's scene to rebuild the frames.
    pub fn replay(
        task: TaskInstance,
        seed: u64,
        trajectory: Trajectory,
        world: &WorldConfig,
    ) -> Result<Demo, DemoError> {
        let frames = rollout(&task.scene, &trajectory, world).map_err(|e| DemoError::Failure {
            cause: e.to_string(),
        })?;
        let keyframes = extract_keyframes(&trajectory, &KeyframeConfig::from_world(world))
            .map_err(|e| DemoError::Failure {
                cause: e.to_string(),
            })?;
        Ok(Demo {
            task,
            seed,
            trajectory,
            frames,
            keyframes,
        })
    }

    pub fn final_scene(&self) -> &Scene {
        &self.frames[self.frames.len() - 1]
    }

    pub fn translated(&self, t: crate::geometry::Vec3) -> Demo {
        Demo {
            task: self.task.translated(t),
            seed: self.seed,
            trajectory: self.trajectory.translated(t),
            frames: self.frames.iter().map(|s| s.translated(t)).collect(),
            keyframes: self.keyframes.clone(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DemoSettings {
    pub world: WorldConfig,
    pub motion: MotionConfig,
    pub expert: ExpertConfig,
    pub sensing: SensingConfig,
}

/// Runs the scripted expert for every step of the task's plan and checks
/// the result against the task's success predicate.
pub fn generate_demo(
    task: &TaskInstance,
    seed: u64,
    cfg: &DemoSettings,
) -> Result<Demo, DemoError> {
    let fail = |cause: String| DemoError::Failure { cause };
    let plan = parse_task(&task.description).map_err(|e| fail(e.to_string()))?;
    task.scene.validate().map_err(|e| fail(e.to_string()))?;
    let mut script = Script::new(task.scene.clone(), &cfg.world, &cfg.motion, &cfg.expert);
    for (i, (skill, query)) in plan.steps.iter().enumerate() {
        let cloud = observe(&script.scene, &SensorNoise::default(), &cfg.sensing, seed)
            .ok_or_else(|| fail("scene has no objects".into()))?;
        let target = ground_object(query, &cloud, &script.scene)
            .map_err(|e| fail(format!("step {i}: {e}")))?;
        script.run(*skill, target)?;
    }
    let trajectory = Trajectory::new(script.steps).map_err(|e| fail(e.to_string()))?;
    let demo = Demo::replay(task.clone(), seed, trajectory, &cfg.world)?;
    let ok = check_success(task, demo.final_scene()).map_err(|e| fail(e.to_string()))?;
    if !ok {
        return Err(fail(format!("task `{}` not achieved", task.task_id)));
    }
    Ok(demo)
}
