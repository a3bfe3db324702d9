//! Rigid-body math, point clouds and the cloud metrics used for retrieval.

mod cloud;
pub(crate) mod nn;
mod quat;
mod transform;
mod vec3;

pub use cloud::{
    apply_transform, chamfer_arrays, chamfer_distance, covariance, nearest_indices,
    principal_frame, PointCloud,
};
pub use quat::UnitQuat;
pub use transform::RigidTransform;
pub use vec3::Vec3;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GeometryError {
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("point {0} is not finite")]
    NonFinite(usize),
    #[error("covariance is degenerate (rank {rank})")]
    DegenerateFrame { rank: usize },
}

/// Axis-aligned box, used for collision and clearance checks.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        Aabb { min, max }
    }

    pub fn inflated(&self, margin: f64) -> Aabb {
        let m = Vec3::new(margin, margin, margin);
        Aabb::new(self.min - m, self.max + m)
    }

    pub fn translated(&self, t: Vec3) -> Aabb {
        Aabb::new(self.min + t, self.max + t)
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    /// Closed containment.
    pub fn contains(&self, p: Vec3) -> bool {
        p.x >= self.min.x
            && p.x <= self.max.x
            && p.y >= self.min.y
            && p.y <= self.max.y
            && p.z >= self.min.z
            && p.z <= self.max.z
    }

    /// Containment with every face pulled in by `eps`, so touching surfaces
    /// do not count.
    pub fn contains_strictly(&self, p: Vec3, eps: f64) -> bool {
        p.x > self.min.x + eps
            && p.x < self.max.x - eps
            && p.y > self.min.y + eps
            && p.y < self.max.y - eps
            && p.z > self.min.z + eps
            && p.z < self.max.z - eps
    }

    pub fn overlaps_strictly(&self, o: &Aabb, eps: f64) -> bool {
        self.min.x < o.max.x - eps
            && o.min.x < self.max.x - eps
            && self.min.y < o.max.y - eps
            && o.min.y < self.max.y - eps
            && self.min.z < o.max.z - eps
            && o.min.z < self.max.z - eps
    }

    pub fn contains_planar(&self, p: Vec3) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }
}
