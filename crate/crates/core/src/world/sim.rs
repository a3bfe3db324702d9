//! Kinematic stepping. Motion between two states is interpolated linearly in
//! position and spherically in orientation with a fixed substep, and every
//! substep applies grasp, release, contact and collision rules in that order.

use std::f64::consts::TAU;

use super::{
    Articulation, Attachment, ExecutionError, GripperState, InstanceId, Scene, Trajectory,
    WorldConfig, WorldError,
};
use crate::geometry::Vec3;

pub fn step_to(
    scene: &Scene,
    target: &GripperState,
    cfg: &WorldConfig,
) -> Result<Scene, WorldError> {
    let p = target.position;
    if !p.is_finite() {
        return Err(WorldError::WorkspaceViolation { position: p });
    }
    if p.z < cfg.table_z {
        return Err(WorldError::TableCollision { z: p.z });
    }
    if !cfg.in_workspace(p) {
        return Err(WorldError::WorkspaceViolation { position: p });
    }
    if !(0.0..=1.0).contains(&target.aperture) {
        return Err(WorldError::InvalidAperture(target.aperture));
    }
    let start = scene.gripper;
    if *target == start {
        return Ok(scene.clone());
    }
    let n = substep_count(&start, target, cfg);
    let mut s = scene.clone();
    for k in 1..=n {
        let next = if k == n {
            *target
        } else {
            interpolate(&start, target, k as f64 / n as f64)
        };
        substep(&mut s, next, cfg)?;
    }
    Ok(s)
}

/// Sequential fold of [`step_to`] over the trajectory.
pub fn execute_trajectory(
    scene: &Scene,
    trajectory: &Trajectory,
    cfg: &WorldConfig,
) -> Result<Scene, ExecutionError> {
    let mut s = scene.clone();
    for (step, state) in trajectory.steps().iter().enumerate() {
        s = step_to(&s, state, cfg).map_err(|error| ExecutionError { step, error })?;
    }
    Ok(s)
}

/// Like [`execute_trajectory`] but keeps the scene after every step.
pub fn rollout(
    scene: &Scene,
    trajectory: &Trajectory,
    cfg: &WorldConfig,
) -> Result<Vec<Scene>, ExecutionError> {
    let mut out = Vec::with_capacity(trajectory.len());
    let mut s = scene.clone();
    for (step, state) in trajectory.steps().iter().enumerate() {
        s = step_to(&s, state, cfg).map_err(|error| ExecutionError { step, error })?;
        out.push(s.clone());
    }
    Ok(out)
}

fn substep_count(a: &GripperState, b: &GripperState, cfg: &WorldConfig) -> usize {
    // the small slack keeps exact multiples of the substep from rounding up
    let by_pos = (a.position.distance(b.position) / cfg.substep - 1e-9).ceil();
    let by_rot = (a.orientation.angle_to(b.orientation) / cfg.substep_angle - 1e-9).ceil();
    by_pos.max(by_rot).max(1.0) as usize
}

pub(crate) fn interpolate(a: &GripperState, b: &GripperState, s: f64) -> GripperState {
    GripperState {
        position: a.position.lerp(b.position, s),
        orientation: a.orientation.slerp(b.orientation, s),
        aperture: a.aperture + (b.aperture - a.aperture) * s,
    }
}

fn substep(s: &mut Scene, next: GripperState, cfg: &WorldConfig) -> Result<(), WorldError> {
    let prev = s.gripper;
    s.gripper = next;
    let delta = next.position - prev.position;
    carry_attached(s);

    if prev.aperture >= cfg.grasp_close_threshold
        && next.aperture < cfg.grasp_close_threshold
        && s.attached.is_none()
    {
        try_grasp(s, cfg);
    }
    if prev.aperture <= cfg.release_threshold && next.aperture > cfg.release_threshold {
        if let Some(a) = s.attached.take() {
            settle(s, a.id, cfg);
        }
    }

    apply_contacts(s, &prev, delta, cfg);
    check_collisions(s, cfg)
}

fn carry_attached(s: &mut Scene) {
    if let Some(a) = s.attached {
        let pose = s.gripper.pose().compose(&a.offset);
        if let Some(o) = s.object_mut(a.id) {
            o.pose = pose;
        }
    }
}

fn try_grasp(s: &mut Scene, cfg: &WorldConfig) {
    let g = s.gripper.position;
    let best = s
        .objects
        .iter()
        .filter(|o| o.category.is_graspable())
        .map(|o| (o.grasp_point(cfg).distance(g), o.instance_id))
        .filter(|(d, _)| *d <= cfg.grasp_radius)
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    if let Some((_, id)) = best {
        let pose = s.object(id).map(|o| o.pose).unwrap_or_default();
        s.attached = Some(Attachment {
            id,
            offset: s.gripper.pose().inverse().compose(&pose),
        });
    }
}

/// Drops a released object onto the highest support under its centre.
fn settle(s: &mut Scene, id: InstanceId, cfg: &WorldConfig) {
    let Some(obj) = s.object(id) else { return };
    let bottom = obj.bottom_z();
    let center = obj.center();
    let mut support = cfg.table_z;
    for o in s.objects.iter().filter(|o| o.instance_id != id) {
        let b = o.aabb();
        if !b.contains_planar(center) {
            continue;
        }
        let top = if o.category.is_container() {
            b.min.z + cfg.container_floor
        } else {
            b.max.z
        };
        if top <= bottom + cfg.collision_eps && top > support {
            support = top;
        }
    }
    if let Some(o) = s.object_mut(id) {
        o.pose.translation.z += support - bottom;
    }
}

fn apply_contacts(s: &mut Scene, prev: &GripperState, delta: Vec3, cfg: &WorldConfig) {
    let next = s.gripper;
    let attached = s.attached.map(|a| a.id);
    // points that can push: the gripper and the underside of a carried object
    let mut pushers = vec![next.position];
    let mut carried_bottom = None;
    if let Some(o) = attached.and_then(|id| s.object(id)) {
        let b = Vec3::new(o.center().x, o.center().y, o.bottom_z());
        pushers.push(b);
        carried_bottom = Some(b);
    }
    let twist = (next.orientation * prev.orientation.inverse()).twist_about_z();

    for o in s.objects.iter_mut() {
        if Some(o.instance_id) == attached {
            continue;
        }
        match o.articulation {
            Articulation::Fixed => {}
            Articulation::Pressable { travel } => {
                if delta.z >= 0.0 || travel <= 0.0 {
                    continue;
                }
                let b = o.aabb();
                for p in &pushers {
                    if b.contains_planar(*p) && p.z < b.max.z {
                        let depth = ((b.max.z - p.z) / travel).min(1.0);
                        o.articulation_value = o.articulation_value.max(depth);
                    }
                }
            }
            Articulation::Prismatic { axis, range } => {
                let Some(a) = axis.normalized() else { continue };
                if range <= 0.0 {
                    continue;
                }
                let handle = o.grasp_point(cfg);
                if prev.position.distance(handle) > cfg.contact_radius {
                    continue;
                }
                let along = delta.dot(a);
                let hooked = next.aperture < cfg.grasp_close_threshold;
                // pulling needs a closed grip, pushing does not
                let moved = if along < 0.0 || (along > 0.0 && hooked) {
                    along
                } else {
                    0.0
                };
                let v = (o.articulation_value + moved / range).clamp(0.0, 1.0);
                let shift = (v - o.articulation_value) * range;
                o.articulation_value = v;
                o.pose.translation += a * shift;
            }
            Articulation::Threaded => {
                let Some(bottom) = carried_bottom else {
                    continue;
                };
                if bottom.distance(o.top_center()) <= cfg.contact_radius && twist != 0.0 {
                    o.articulation_value = (o.articulation_value + twist / TAU).clamp(0.0, 1.0);
                }
            }
            Articulation::HingedLid { open_angle } => {
                // lifting the hooked front edge swings the lid about its back edge
                let b = o.aabb();
                let lever = (b.max.y - b.min.y).max(1e-6);
                let edge = Vec3::new(o.center().x, b.min.y, b.max.z);
                let hooked = next.aperture < cfg.grasp_close_threshold;
                if hooked && prev.position.distance(edge) <= cfg.contact_radius && open_angle > 0.0
                {
                    let d = delta.z / lever / open_angle;
                    o.articulation_value = (o.articulation_value + d).clamp(0.0, 1.0);
                }
            }
        }
    }
}

fn check_collisions(s: &Scene, cfg: &WorldConfig) -> Result<(), WorldError> {
    let g = s.gripper.position;
    let attached = s.attached.map(|a| a.id);
    let carried = attached.and_then(|id| s.object(id)).map(|o| o.aabb());
    if let Some(b) = carried {
        if b.min.z < cfg.table_z - cfg.collision_eps {
            return Err(WorldError::TableCollision { z: b.min.z });
        }
    }
    for o in &s.objects {
        if Some(o.instance_id) == attached || !o.category.is_solid() {
            continue;
        }
        let b = o.aabb();
        if b.contains_strictly(g, cfg.collision_eps) {
            return Err(WorldError::Collision { id: o.instance_id });
        }
        if let Some(c) = carried {
            if c.overlaps_strictly(&b, cfg.collision_eps) {
                return Err(WorldError::Collision { id: o.instance_id });
            }
        }
    }
    Ok(())
}
