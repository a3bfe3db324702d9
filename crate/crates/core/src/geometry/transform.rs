use serde::{Deserialize, Serialize};

use super::{UnitQuat, Vec3};

/// Rigid transform `p -> R p + t`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    pub rotation: UnitQuat,
    pub translation: Vec3,
}

impl RigidTransform {
    pub const IDENTITY: RigidTransform = RigidTransform {
        rotation: UnitQuat::IDENTITY,
        translation: Vec3::ZERO,
    };

    pub fn new(rotation: UnitQuat, translation: Vec3) -> Self {
        RigidTransform {
            rotation,
            translation,
        }
    }

    pub fn from_translation(t: Vec3) -> Self {
        RigidTransform::new(UnitQuat::IDENTITY, t)
    }

    pub fn from_rotation(r: UnitQuat) -> Self {
        RigidTransform::new(r, Vec3::ZERO)
    }

    pub fn apply(&self, p: Vec3) -> Vec3 {
        self.rotation.rotate(p) + self.translation
    }

    /// Rotates a direction; translation does not apply.
    pub fn apply_vector(&self, v: Vec3) -> Vec3 {
        self.rotation.rotate(v)
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation.rotate(other.translation) + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let r = self.rotation.inverse();
        RigidTransform {
            rotation: r,
            translation: -r.rotate(self.translation),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_cancels() {
        let t = RigidTransform::new(
            UnitQuat::from_axis_angle(Vec3::new(0.2, 0.9, -0.4), 1.3),
            Vec3::new(0.5, -1.0, 2.0),
        );
        let p = Vec3::new(0.1, 0.2, 0.3);
        assert!(t.inverse().apply(t.apply(p)).distance(p) < 1e-14);
        let id = t.compose(&t.inverse());
        assert!(id.translation.norm() < 1e-14);
        assert!(id.rotation.angle() < 1e-7);
    }
}
