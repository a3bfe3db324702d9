//! Retreat-over connection between the end of one skill and the start of
//! the next: up, across, down.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Aabb, Vec3};
use crate::world::{GripperState, Scene, Trajectory, WorldConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MotionConfig {
    /// Transit height above the table.
    pub z_safe: f64,
    /// Highest transit height tried.
    pub z_max: f64,
    pub raise_step: f64,
    /// Margin added around every object box.
    pub clearance: f64,
    /// Waypoint spacing of the emitted trajectory.
    pub spacing: f64,
}

impl Default for MotionConfig {
    fn default() -> Self {
        MotionConfig {
            z_safe: 0.25,
            z_max: 0.6,
            raise_step: 0.05,
            clearance: 0.01,
            spacing: 0.025,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("no collision-free connection: {reason}")]
pub struct PlanFailure {
    pub reason: String,
}

/// Gripper-space obstacles: each object box grown by the clearance and, when
/// something is carried, by the carried box (Minkowski sum), so the carried
/// object is checked by testing the gripper point alone.
pub(crate) fn obstacles(scene: &Scene, clearance: f64) -> Vec<Aabb> {
    let carried = scene.attached.and_then(|a| scene.object(a.id)).map(|o| {
        let b = o.aabb();
        let g = scene.gripper.position;
        // carried box relative to the gripper
        (b.min - g, b.max - g)
    });
    scene
        .objects
        .iter()
        .filter(|o| Some(o.instance_id) != scene.attached_id())
        .map(|o| {
            let b = o.aabb().inflated(clearance);
            match carried {
                Some((lo, hi)) => Aabb::new(b.min - hi, b.max - lo),
                None => b,
            }
        })
        .collect()
}

/// Whether the open segment `a -> b` meets the open interior of `bx`.
pub(crate) fn segment_hits(a: Vec3, b: Vec3, bx: &Aabb) -> bool {
    let d = b - a;
    let mut t0: f64 = 0.0;
    let mut t1: f64 = 1.0;
    for k in 0..3 {
        let (p, v) = (a.component(k), d.component(k));
        let (lo, hi) = (bx.min.component(k), bx.max.component(k));
        if v == 0.0 {
            if p <= lo || p >= hi {
                return false;
            }
            continue;
        }
        let (mut e, mut x) = ((lo - p) / v, (hi - p) / v);
        if e > x {
            std::mem::swap(&mut e, &mut x);
        }
        t0 = t0.max(e);
        t1 = t1.min(x);
        if t0 >= t1 {
            return false;
        }
    }
    t0 < t1
}

/// True when no box is crossed, ignoring boxes that contain `a` (if
/// `exempt_start`) or `b` (if `exempt_goal`).
pub(crate) fn leg_clear(
    a: Vec3,
    b: Vec3,
    boxes: &[Aabb],
    exempt_start: bool,
    exempt_goal: bool,
) -> bool {
    boxes.iter().all(|bx| {
        (exempt_start && bx.contains(a))
            || (exempt_goal && bx.contains(b))
            || !segment_hits(a, b, bx)
    })
}

/// Equally spaced points from `a` (exclusive) to `b` (inclusive).
pub(crate) fn densify(a: Vec3, b: Vec3, spacing: f64) -> Vec<(f64, Vec3)> {
    let d = a.distance(b);
    if d == 0.0 {
        return vec![];
    }
    let n = ((d / spacing - 1e-9).ceil() as usize).max(1);
    (1..=n)
        .map(|k| {
            let s = k as f64 / n as f64;
            (s, if k == n { b } else { a.lerp(b, s) })
        })
        .collect()
}

pub fn connect_skills(
    current: &GripperState,
    goal: &GripperState,
    scene: &Scene,
    world: &WorldConfig,
    cfg: &MotionConfig,
) -> Result<Trajectory, PlanFailure> {
    if current == goal {
        return Ok(Trajectory::single(*current));
    }
    let (a, d) = (current.position, goal.position);
    if d.z < world.table_z || !d.is_finite() {
        return Err(PlanFailure {
            reason: format!("goal z = {} is below the table", d.z),
        });
    }
    if !world.in_workspace(d) || !world.in_workspace(a) {
        return Err(PlanFailure {
            reason: format!("goal {d:?} is outside the workspace"),
        });
    }
    let held = |p: Vec3, q| GripperState::new(p, q, current.aperture);
    if a == d {
        let mut steps = vec![*current];
        if goal.orientation != current.orientation {
            steps.push(held(d, goal.orientation));
        }
        return Ok(Trajectory::new(steps).expect("nonempty"));
    }

    let boxes = obstacles(scene, cfg.clearance);
    let mut z = (world.table_z + cfg.z_safe).max(a.z).max(d.z);
    while z <= cfg.z_max + 1e-12 {
        let b = Vec3::new(a.x, a.y, z);
        let c = Vec3::new(d.x, d.y, z);
        let clear = leg_clear(a, b, &boxes, true, false)
            && leg_clear(b, c, &boxes, false, false)
            && leg_clear(c, d, &boxes, false, true);
        if clear {
            let mut steps = vec![*current];
            for (_, p) in densify(a, b, cfg.spacing) {
                steps.push(held(p, current.orientation));
            }
            for (s, p) in densify(b, c, cfg.spacing) {
                steps.push(held(p, current.orientation.slerp(goal.orientation, s)));
            }
            if b == c {
                // no horizontal leg: turn in place at the top
                if goal.orientation != current.orientation {
                    steps.push(held(c, goal.orientation));
                }
            }
            for (_, p) in densify(c, d, cfg.spacing) {
                steps.push(held(p, goal.orientation));
            }
            let last = steps.len() - 1;
            steps[last] = held(d, goal.orientation);
            return Ok(Trajectory::new(steps).expect("nonempty"));
        }
        z += cfg.raise_step;
    }
    Err(PlanFailure {
        reason: format!("every transit height up to {} is blocked", cfg.z_max),
    })
}
