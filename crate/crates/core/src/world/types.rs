use serde::{Deserialize, Serialize};

use super::{WorldConfig, WorldError};
use crate::geometry::{Aabb, RigidTransform, UnitQuat, Vec3};

pub type InstanceId = u32;

/// One control step: position, orientation and aperture (1 = open).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 8]", into = "[f64; 8]")]
pub struct GripperState {
    pub position: Vec3,
    pub orientation: UnitQuat,
    pub aperture: f64,
}

impl GripperState {
    pub fn new(position: Vec3, orientation: UnitQuat, aperture: f64) -> Self {
        GripperState {
            position,
            orientation,
            aperture,
        }
    }

    pub fn pose(&self) -> RigidTransform {
        RigidTransform::new(self.orientation, self.position)
    }

    pub fn with_position(self, position: Vec3) -> Self {
        GripperState { position, ..self }
    }

    pub fn with_aperture(self, aperture: f64) -> Self {
        GripperState { aperture, ..self }
    }

    pub fn with_orientation(self, orientation: UnitQuat) -> Self {
        GripperState {
            orientation,
            ..self
        }
    }

    pub fn translated(self, t: Vec3) -> Self {
        self.with_position(self.position + t)
    }

    /// Largest componentwise gap to `other` over position, orientation
    /// (angle) and aperture.
    pub fn max_difference(&self, other: &GripperState) -> f64 {
        self.position
            .distance(other.position)
            .max(self.orientation.angle_to(other.orientation))
            .max((self.aperture - other.aperture).abs())
    }

    pub fn to_array(&self) -> [f64; 8] {
        let p = self.position;
        let q = self.orientation;
        [p.x, p.y, p.z, q.w(), q.x(), q.y(), q.z(), self.aperture]
    }
}

impl From<GripperState> for [f64; 8] {
    fn from(s: GripperState) -> Self {
        s.to_array()
    }
}

impl TryFrom<[f64; 8]> for GripperState {
    type Error = String;
    fn try_from(a: [f64; 8]) -> Result<Self, String> {
        let q = UnitQuat::try_from([a[3], a[4], a[5], a[6]])?;
        if !(0.0..=1.0).contains(&a[7]) {
            return Err(format!("aperture {} outside [0, 1]", a[7]));
        }
        Ok(GripperState::new(Vec3::new(a[0], a[1], a[2]), q, a[7]))
    }
}

/// Nonempty ordered sequence of gripper states.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<GripperState>", into = "Vec<GripperState>")]
pub struct Trajectory {
    steps: Vec<GripperState>,
}

impl Trajectory {
    pub fn new(steps: Vec<GripperState>) -> Result<Self, WorldError> {
        if steps.is_empty() {
            return Err(WorldError::EmptyTrajectory);
        }
        Ok(Trajectory { steps })
    }

    pub fn single(state: GripperState) -> Self {
        Trajectory { steps: vec![state] }
    }

    pub fn steps(&self) -> &[GripperState] {
        &self.steps
    }

    pub fn into_steps(self) -> Vec<GripperState> {
        self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn first(&self) -> &GripperState {
        &self.steps[0]
    }

    pub fn last(&self) -> &GripperState {
        &self.steps[self.steps.len() - 1]
    }

    /// Checks the step-length bound; reports the first offending index.
    pub fn validate(&self, cfg: &WorldConfig) -> Result<(), WorldError> {
        for (i, w) in self.steps.windows(2).enumerate() {
            let d = w[0].position.distance(w[1].position);
            if d > cfg.step_max + 1e-12 {
                return Err(WorldError::StepTooLong {
                    step: i + 1,
                    length: d,
                });
            }
        }
        Ok(())
    }

    pub fn map_positions(&self, f: impl Fn(Vec3) -> Vec3) -> Trajectory {
        Trajectory {
            steps: self
                .steps
                .iter()
                .map(|s| s.with_position(f(s.position)))
                .collect(),
        }
    }

    pub fn translated(&self, t: Vec3) -> Trajectory {
        self.map_positions(|p| p + t)
    }

    /// Applies a rigid transform to positions and orientations.
    pub fn transformed(&self, t: &RigidTransform) -> Trajectory {
        Trajectory {
            steps: self
                .steps
                .iter()
                .map(|s| GripperState {
                    position: t.apply(s.position),
                    orientation: t.rotation * s.orientation,
                    aperture: s.aperture,
                })
                .collect(),
        }
    }

    pub fn slice(&self, start: usize, end_inclusive: usize) -> Trajectory {
        Trajectory {
            steps: self.steps[start..=end_inclusive].to_vec(),
        }
    }
}

impl TryFrom<Vec<GripperState>> for Trajectory {
    type Error = WorldError;
    fn try_from(v: Vec<GripperState>) -> Result<Self, WorldError> {
        Trajectory::new(v)
    }
}

impl From<Trajectory> for Vec<GripperState> {
    fn from(t: Trajectory) -> Self {
        t.steps
    }
}

token_enum!(Category {
    Button => "button",
    Jar => "jar",
    Lid => "lid",
    Bulb => "bulb",
    Drawer => "drawer",
    Box => "box",
    Block => "block",
    Cup => "cup",
    Distractor => "distractor",
});

token_enum!(Color {
    Red => "red",
    Green => "green",
    Blue => "blue",
    Yellow => "yellow",
    White => "white",
    Gray => "gray",
    Orange => "orange",
    Pink => "pink",
    Purple => "purple",
    Black => "black",
    Brown => "brown",
});

impl Category {
    /// Objects the gripper can rigidly pick up.
    pub fn is_graspable(&self) -> bool {
        matches!(
            self,
            Category::Block | Category::Cup | Category::Bulb | Category::Lid
        )
    }

    /// Objects the gripper (or a carried object) may not penetrate.
    pub fn is_solid(&self) -> bool {
        matches!(
            self,
            Category::Jar | Category::Drawer | Category::Distractor
        )
    }

    /// Open-top containers: released objects settle on their floor.
    pub fn is_container(&self) -> bool {
        matches!(self, Category::Box)
    }
}

/// Geometric primitive in the object's local frame, centred at the origin.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    /// Full side lengths along local x, y, z.
    Box(Vec3),
    /// Axis along local z.
    Cylinder {
        radius: f64,
        height: f64,
    },
    Sphere {
        radius: f64,
    },
}

impl Shape {
    pub fn half_extents(&self) -> Vec3 {
        match *self {
            Shape::Box(s) => s * 0.5,
            Shape::Cylinder { radius, height } => Vec3::new(radius, radius, height * 0.5),
            Shape::Sphere { radius } => Vec3::new(radius, radius, radius),
        }
    }

    pub fn scaled(&self, s: f64) -> Shape {
        match *self {
            Shape::Box(v) => Shape::Box(v * s),
            Shape::Cylinder { radius, height } => Shape::Cylinder {
                radius: radius * s,
                height: height * s,
            },
            Shape::Sphere { radius } => Shape::Sphere { radius: radius * s },
        }
    }

    pub fn is_valid(&self) -> bool {
        let h = self.half_extents();
        h.x > 0.0 && h.y > 0.0 && h.z > 0.0 && h.is_finite()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Articulation {
    Fixed,
    /// Press travel (m) along local -z.
    Pressable {
        travel: f64,
    },
    /// Opening direction (world frame) and travel range (m).
    Prismatic {
        axis: Vec3,
        range: f64,
    },
    HingedLid {
        open_angle: f64,
    },
    /// Receives a screwed-on lid; the value is the accumulated turn fraction.
    Threaded,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub instance_id: InstanceId,
    pub category: Category,
    pub shape: Shape,
    pub color: Color,
    pub pose: RigidTransform,
    pub articulation: Articulation,
    pub articulation_value: f64,
    /// Size relative to the family's nominal object.
    #[serde(default = "unit_scale")]
    pub scale: f64,
}

fn unit_scale() -> f64 {
    1.0
}

impl ObjectSpec {
    pub fn center(&self) -> Vec3 {
        self.pose.translation
    }

    pub fn aabb(&self) -> Aabb {
        let h = self.shape.half_extents();
        let m = self.pose.rotation.to_matrix();
        let ext = Vec3::new(
            m[0][0].abs() * h.x + m[0][1].abs() * h.y + m[0][2].abs() * h.z,
            m[1][0].abs() * h.x + m[1][1].abs() * h.y + m[1][2].abs() * h.z,
            m[2][0].abs() * h.x + m[2][1].abs() * h.y + m[2][2].abs() * h.z,
        );
        let c = self.center();
        Aabb::new(c - ext, c + ext)
    }

    pub fn top_z(&self) -> f64 {
        self.aabb().max.z
    }

    pub fn bottom_z(&self) -> f64 {
        self.aabb().min.z
    }

    pub fn top_center(&self) -> Vec3 {
        Vec3::new(self.center().x, self.center().y, self.top_z())
    }

    /// Point the gripper targets when interacting with this object.
    pub fn grasp_point(&self, cfg: &WorldConfig) -> Vec3 {
        match (self.category, self.articulation) {
            (_, Articulation::Prismatic { axis, .. }) => self.handle_point(axis, cfg),
            (Category::Button | Category::Jar, _) | (_, Articulation::HingedLid { .. }) => {
                self.top_center()
            }
            _ => self.center(),
        }
    }

    fn handle_point(&self, axis: Vec3, cfg: &WorldConfig) -> Vec3 {
        let a = axis.normalized().unwrap_or(Vec3::Y);
        let h = self.aabb();
        let half = (h.max - h.min) * 0.5;
        let reach = (a.x * half.x).abs() + (a.y * half.y).abs() + (a.z * half.z).abs();
        self.center() + a * (reach + cfg.handle_offset)
    }

    /// "small" / "medium" / "large" relative to the nominal instance.
    pub fn size_class(&self) -> &'static str {
        if self.scale < 0.9 {
            "small"
        } else if self.scale > 1.1 {
            "large"
        } else {
            "medium"
        }
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        if !self.shape.is_valid() {
            return Err(WorldError::InvalidObject {
                id: self.instance_id,
                reason: "dimensions must be positive".into(),
            });
        }
        if !(0.0..=1.0).contains(&self.articulation_value) {
            return Err(WorldError::InvalidObject {
                id: self.instance_id,
                reason: format!(
                    "articulation value {} outside [0, 1]",
                    self.articulation_value
                ),
            });
        }
        Ok(())
    }
}

/// An object rigidly held by the gripper.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Attachment {
    pub id: InstanceId,
    /// Object pose expressed in the gripper frame.
    pub offset: RigidTransform,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub objects: Vec<ObjectSpec>,
    pub gripper: GripperState,
    pub attached: Option<Attachment>,
    /// `[[x_min, x_max], [y_min, y_max]]`.
    pub table_extent: [[f64; 2]; 2],
    pub rng_seed: u64,
}

impl Scene {
    pub fn object(&self, id: InstanceId) -> Option<&ObjectSpec> {
        self.objects.iter().find(|o| o.instance_id == id)
    }

    pub fn object_mut(&mut self, id: InstanceId) -> Option<&mut ObjectSpec> {
        self.objects.iter_mut().find(|o| o.instance_id == id)
    }

    pub fn attached_id(&self) -> Option<InstanceId> {
        self.attached.map(|a| a.id)
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        let mut ids: Vec<InstanceId> = self.objects.iter().map(|o| o.instance_id).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(WorldError::DuplicateInstance(w[0]));
        }
        for o in &self.objects {
            o.validate()?;
        }
        if let Some(a) = self.attached {
            if self.object(a.id).is_none() {
                return Err(WorldError::UnknownInstance(a.id));
            }
        }
        if !(0.0..=1.0).contains(&self.gripper.aperture) {
            return Err(WorldError::InvalidAperture(self.gripper.aperture));
        }
        Ok(())
    }

    /// Rigidly shifts every object and the gripper.
    pub fn translated(&self, t: Vec3) -> Scene {
        let mut s = self.clone();
        for o in &mut s.objects {
            o.pose.translation += t;
        }
        s.gripper = s.gripper.translated(t);
        s
    }
}
