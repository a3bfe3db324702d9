use serde::{Deserialize, Serialize};

use crate::geometry::Vec3;

/// Thresholds of the kinematic simulator, kept in one block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub table_z: f64,
    pub workspace_min: Vec3,
    pub workspace_max: Vec3,
    /// Largest allowed distance between consecutive trajectory positions.
    pub step_max: f64,
    /// Interpolation substep length for positions (m).
    pub substep: f64,
    /// Interpolation substep for orientations (rad).
    pub substep_angle: f64,
    pub grasp_close_threshold: f64,
    pub release_threshold: f64,
    pub grasp_radius: f64,
    pub contact_radius: f64,
    /// Distance of a drawer handle in front of the drawer face.
    pub handle_offset: f64,
    /// Height gain that completes a lift.
    pub lift_height: f64,
    /// Floor thickness of open containers.
    pub container_floor: f64,
    /// Tolerance under which touching surfaces do not collide.
    pub collision_eps: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            table_z: 0.0,
            workspace_min: Vec3::new(-0.6, -0.5, 0.0),
            workspace_max: Vec3::new(0.6, 0.7, 0.8),
            step_max: 0.05,
            substep: 0.005,
            substep_angle: 0.1,
            grasp_close_threshold: 0.2,
            release_threshold: 0.8,
            grasp_radius: 0.03,
            contact_radius: 0.03,
            handle_offset: 0.02,
            lift_height: 0.10,
            container_floor: 0.005,
            collision_eps: 1e-6,
        }
    }
}

impl WorldConfig {
    pub fn in_workspace(&self, p: Vec3) -> bool {
        let (lo, hi) = (self.workspace_min, self.workspace_max);
        p.x >= lo.x && p.x <= hi.x && p.y >= lo.y && p.y <= hi.y && p.z >= lo.z && p.z <= hi.z
    }
}
