//! Scripted experts. Each skill is a short motion script written against the
//! live simulated scene, so later steps see where earlier ones left things.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use super::DemoError;
use crate::executor::motion::{connect_skills, densify, leg_clear, obstacles, MotionConfig};
use crate::geometry::{UnitQuat, Vec3};
use crate::skill_discovery::SkillLabel;
use crate::world::{
    step_to, Articulation, GripperState, InstanceId, ObjectSpec, Scene, WorldConfig,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExpertConfig {
    /// Waypoint spacing in free space and near contact.
    pub free_spacing: f64,
    pub contact_spacing: f64,
    /// Largest yaw change per step while screwing.
    pub yaw_step: f64,
    /// Steps used to open or close the gripper.
    pub aperture_steps: usize,
    /// Height of the pre-grasp pose above an object's top.
    pub clearance_above: f64,
    /// Standoff of the pre-pose in front of a drawer handle.
    pub standoff: f64,
    /// Press depth as a multiple of the button travel.
    pub press_depth: f64,
    pub lift_rise: f64,
    pub screw_turn: f64,
    /// Gap left between a lid and the jar mouth before turning.
    pub screw_gap: f64,
    /// Height above a container floor at which an object is released.
    pub release_gap: f64,
    pub pull_extra: f64,
    pub push_extra: f64,
}

impl Default for ExpertConfig {
    fn default() -> Self {
        ExpertConfig {
            free_spacing: 0.02,
            contact_spacing: 0.01,
            yaw_step: 0.25,
            aperture_steps: 4,
            clearance_above: 0.08,
            standoff: 0.06,
            press_depth: 1.5,
            lift_rise: 0.15,
            screw_turn: TAU + 0.5,
            screw_gap: 0.005,
            release_gap: 0.01,
            pull_extra: 0.005,
            push_extra: 0.01,
        }
    }
}

/// Records a trajectory while executing it.
pub(crate) struct Script<'a> {
    pub scene: Scene,
    pub steps: Vec<GripperState>,
    pub world: &'a WorldConfig,
    pub motion: &'a MotionConfig,
    pub cfg: &'a ExpertConfig,
}

impl<'a> Script<'a> {
    pub fn new(
        scene: Scene,
        world: &'a WorldConfig,
        motion: &'a MotionConfig,
        cfg: &'a ExpertConfig,
    ) -> Self {
        let first = scene.gripper;
        Script {
            scene,
            steps: vec![first],
            world,
            motion,
            cfg,
        }
    }

    fn gripper(&self) -> GripperState {
        self.scene.gripper
    }

    fn push(&mut self, s: GripperState) -> Result<(), DemoError> {
        self.scene = step_to(&self.scene, &s, self.world).map_err(|e| DemoError::Failure {
            cause: format!("step {}: {e}", self.steps.len()),
        })?;
        self.steps.push(s);
        Ok(())
    }

    fn line_to(&mut self, p: Vec3, spacing: f64) -> Result<(), DemoError> {
        let g = self.gripper();
        for (_, q) in densify(g.position, p, spacing) {
            self.push(g.with_position(q))?;
        }
        Ok(())
    }

    fn set_aperture(&mut self, c: f64) -> Result<(), DemoError> {
        let g = self.gripper();
        let n = self.cfg.aperture_steps.max(1);
        for k in 1..=n {
            let a = g.aperture + (c - g.aperture) * k as f64 / n as f64;
            self.push(g.with_aperture(if k == n { c } else { a }))?;
        }
        Ok(())
    }

    /// Straight to `p` when that is clear, otherwise up and over.
    fn approach(&mut self, p: Vec3) -> Result<(), DemoError> {
        let g = self.gripper();
        let boxes = obstacles(&self.scene, self.motion.clearance);
        if leg_clear(g.position, p, &boxes, true, false) {
            return self.line_to(p, self.cfg.free_spacing);
        }
        let goal = g.with_position(p);
        let path =
            connect_skills(&g, &goal, &self.scene, self.world, self.motion).map_err(|e| {
                DemoError::Failure {
                    cause: e.to_string(),
                }
            })?;
        for s in path.steps().iter().skip(1) {
            self.push(*s)?;
        }
        Ok(())
    }

    fn object(&self, id: InstanceId) -> Result<ObjectSpec, DemoError> {
        self.scene.object(id).cloned().ok_or(DemoError::Failure {
            cause: format!("object {id} is missing"),
        })
    }

    fn carried(&self) -> Result<ObjectSpec, DemoError> {
        let id = self.scene.attached_id().ok_or(DemoError::Failure {
            cause: "nothing is held".into(),
        })?;
        self.object(id)
    }

    pub fn run(&mut self, skill: SkillLabel, target: InstanceId) -> Result<(), DemoError> {
        match skill {
            SkillLabel::Press => self.press(target),
            SkillLabel::Pick => self.pick(target),
            SkillLabel::Lift => {
                self.pick(target)?;
                let up = self.gripper().position + Vec3::Z * self.cfg.lift_rise;
                self.line_to(up, self.cfg.free_spacing)
            }
            SkillLabel::Place => self.place(target),
            SkillLabel::Screw => self.screw(target),
            SkillLabel::PullOut => self.slide(target, true),
            SkillLabel::PushBack => self.slide(target, false),
            SkillLabel::Open | SkillLabel::Close => Err(DemoError::Failure {
                cause: format!("no scripted expert for skill `{skill}`"),
            }),
        }
    }

    fn press(&mut self, id: InstanceId) -> Result<(), DemoError> {
        let o = self.object(id)?;
        let Articulation::Pressable { travel } = o.articulation else {
            return Err(DemoError::Failure {
                cause: format!("object {id} cannot be pressed"),
            });
        };
        let top = o.top_center();
        let pre = top + Vec3::Z * (self.cfg.clearance_above * 0.75);
        self.approach(pre)?;
        self.line_to(
            top - Vec3::Z * (self.cfg.press_depth * travel),
            self.cfg.contact_spacing,
        )?;
        self.line_to(pre, self.cfg.contact_spacing)
    }

    fn pick(&mut self, id: InstanceId) -> Result<(), DemoError> {
        let o = self.object(id)?;
        if !o.category.is_graspable() {
            return Err(DemoError::Failure {
                cause: format!("object {id} cannot be grasped"),
            });
        }
        let g = o.grasp_point(self.world);
        let pre = Vec3::new(g.x, g.y, o.top_z() + self.cfg.clearance_above);
        self.approach(pre)?;
        self.line_to(g, self.cfg.contact_spacing)?;
        self.set_aperture(0.0)?;
        if self.scene.attached_id() != Some(id) {
            return Err(DemoError::Failure {
                cause: format!("grasp of object {id} did not attach"),
            });
        }
        Ok(())
    }

    /// Lowers the held object into a container and lets go.
    fn place(&mut self, id: InstanceId) -> Result<(), DemoError> {
        let container = self.object(id)?;
        let held = self.carried()?;
        let g = self.gripper().position;
        let below = g.z - held.bottom_z();
        let offset = held.center() - g;
        let c = container.aabb();
        let floor = c.min.z + self.world.container_floor;
        let target = Vec3::new(
            container.center().x - offset.x,
            container.center().y - offset.y,
            floor + self.cfg.release_gap + below,
        );
        let pre = Vec3::new(
            target.x,
            target.y,
            c.max.z + below + self.cfg.clearance_above,
        );
        self.approach(pre)?;
        self.line_to(target, self.cfg.contact_spacing)?;
        self.set_aperture(1.0)?;
        self.line_to(pre, self.cfg.free_spacing)
    }

    fn screw(&mut self, id: InstanceId) -> Result<(), DemoError> {
        let jar = self.object(id)?;
        let lid = self.carried()?;
        let g = self.gripper().position;
        let offset = lid.center() - g;
        let below = g.z - lid.bottom_z();
        let mouth = jar.top_center();
        let target = Vec3::new(
            mouth.x - offset.x,
            mouth.y - offset.y,
            mouth.z + self.cfg.screw_gap + below,
        );
        let pre = target + Vec3::Z * (self.cfg.clearance_above * 0.75);
        self.approach(pre)?;
        self.line_to(target, self.cfg.contact_spacing)?;
        let start = self.gripper();
        let n = (self.cfg.screw_turn / self.cfg.yaw_step).ceil() as usize;
        for k in 1..=n {
            let yaw = self.cfg.screw_turn * k as f64 / n as f64;
            self.push(start.with_orientation(UnitQuat::from_yaw(yaw) * start.orientation))?;
        }
        self.set_aperture(1.0)?;
        self.line_to(pre, self.cfg.free_spacing)
    }

    /// Hooks a drawer handle and pulls it open, or pushes it shut.
    fn slide(&mut self, id: InstanceId, open: bool) -> Result<(), DemoError> {
        let o = self.object(id)?;
        let Articulation::Prismatic { axis, range } = o.articulation else {
            return Err(DemoError::Failure {
                cause: format!("object {id} does not slide"),
            });
        };
        let a = axis.normalized().unwrap_or(Vec3::Y);
        let h = o.grasp_point(self.world);
        let pre = h + a * self.cfg.standoff;
        self.approach(pre)?;
        self.line_to(h, self.cfg.contact_spacing)?;
        if open {
            self.set_aperture(0.0)?;
            let travel = range * (1.0 - o.articulation_value) + self.cfg.pull_extra;
            self.line_to(h + a * travel, self.cfg.contact_spacing)?;
            self.set_aperture(1.0)?;
        } else {
            let travel = range * o.articulation_value + self.cfg.push_extra;
            self.line_to(h - a * travel, self.cfg.contact_spacing)?;
        }
        let back = self.gripper().position + a * self.cfg.standoff;
        self.line_to(back, self.cfg.contact_spacing)
    }
}
