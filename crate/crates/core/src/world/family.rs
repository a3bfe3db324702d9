//! Task families: a TOML description of the objects of one task, their
//! placement relative to a sampled anchor, and the success terms.
//!
//! ```toml
//! name = "press_button"
//! description = "press(button[color={0}])"   # {i} expands to object i's colour
//!
//! [[object]]
//! category = "button"
//! color = "red"
//! shape = { box = [0.06, 0.06, 0.03] }
//! articulation = { pressable = { travel = 0.015 } }
//! offset = [0.0, 0.0]                          # from the anchor, metres
//! jitter = 0.01                                # uniform, per axis
//!
//! [[success]]
//! kind = "articulation_at_least"
//! object = 0
//! value = 1.0
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    Articulation, Category, Color, Condition, GripperState, InstanceId, NearTarget, ObjectSpec,
    Scene, Shape, SuccessPredicate, TaskInstance,
};
use crate::geometry::{Aabb, RigidTransform, UnitQuat, Vec3};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FamilyError {
    #[error("family file: {0}")]
    Parse(String),
    #[error("family `{family}`: {reason}")]
    Invalid { family: String, reason: String },
    #[error("family `{family}`: no overlap-free placement after {tries} tries")]
    Placement { family: String, tries: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectTemplate {
    pub category: Category,
    pub color: Color,
    pub shape: Shape,
    #[serde(default = "fixed")]
    pub articulation: Articulation,
    /// Initial articulation value.
    #[serde(default)]
    pub value: f64,
    pub offset: [f64; 2],
    #[serde(default)]
    pub jitter: f64,
}

fn fixed() -> Articulation {
    Articulation::Fixed
}

/// Success terms written against object indices of the family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConditionTemplate {
    ArticulationAtLeast {
        object: usize,
        value: f64,
    },
    ArticulationAtMost {
        object: usize,
        value: f64,
    },
    NearObject {
        object: usize,
        target: usize,
        radius: f64,
    },
    /// Centre rises at least `gain` above its spawn height.
    HeightGain {
        object: usize,
        gain: f64,
    },
    Attached {
        object: usize,
        attached: bool,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySpec {
    pub name: String,
    pub description: String,
    #[serde(rename = "object")]
    pub objects: Vec<ObjectTemplate>,
    #[serde(default, rename = "success")]
    pub success: Vec<ConditionTemplate>,
}

/// Axis-aligned planar region `x × y`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Region {
    pub x: [f64; 2],
    pub y: [f64; 2],
}

impl Region {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x[0] && x <= self.x[1] && y >= self.y[0] && y <= self.y[1]
    }

    pub fn intersects(&self, o: &Region) -> bool {
        self.x[0] <= o.x[1] && o.x[0] <= self.x[1] && self.y[0] <= o.y[1] && o.y[0] <= self.y[1]
    }

    /// Planar distance from a point to the region (0 inside).
    pub fn distance_outside(&self, x: f64, y: f64) -> f64 {
        let dx = (self.x[0] - x).max(x - self.x[1]).max(0.0);
        let dy = (self.y[0] - y).max(y - self.y[1]).max(0.0);
        dx.hypot(dy)
    }

    fn is_valid(&self) -> bool {
        self.x[0] <= self.x[1] && self.y[0] <= self.y[1]
    }
}

/// Scene-wide settings shared by every family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneDefaults {
    pub home: Vec3,
    pub table_extent: [[f64; 2]; 2],
    pub table_z: f64,
    /// Smallest planar gap between the boxes of two spawned objects.
    pub min_gap: f64,
    /// Smallest planar gap between a distractor and any family object.
    pub distractor_gap: f64,
    pub max_tries: usize,
}

impl Default for SceneDefaults {
    fn default() -> Self {
        SceneDefaults {
            home: Vec3::new(0.0, -0.35, 0.35),
            table_extent: [[-0.5, 0.5], [-0.3, 0.6]],
            table_z: 0.0,
            min_gap: 0.01,
            distractor_gap: 0.16,
            max_tries: 200,
        }
    }
}

/// How one episode perturbs a family.
#[derive(Clone, Debug, PartialEq)]
pub struct Placement {
    pub region: Region,
    pub scale: Option<[f64; 2]>,
    pub recolor: Vec<(usize, Color)>,
    pub distractors: usize,
}

impl Placement {
    pub fn in_region(region: Region) -> Self {
        Placement {
            region,
            scale: None,
            recolor: vec![],
            distractors: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampledTask {
    pub task: TaskInstance,
    pub anchor: Vec3,
    pub scale: f64,
}

impl FamilySpec {
    pub fn from_toml(text: &str) -> Result<FamilySpec, FamilyError> {
        let spec: FamilySpec =
            toml::from_str(text).map_err(|e| FamilyError::Parse(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    fn invalid(&self, reason: impl Into<String>) -> FamilyError {
        FamilyError::Invalid {
            family: self.name.clone(),
            reason: reason.into(),
        }
    }

    pub fn validate(&self) -> Result<(), FamilyError> {
        if self.objects.is_empty() {
            return Err(self.invalid("no objects"));
        }
        for (i, o) in self.objects.iter().enumerate() {
            if !o.shape.is_valid() || !(0.0..=1.0).contains(&o.value) || o.jitter < 0.0 {
                return Err(self.invalid(format!("object {i} has invalid dimensions or value")));
            }
        }
        let n = self.objects.len();
        for c in &self.success {
            let refs = match *c {
                ConditionTemplate::NearObject { object, target, .. } => vec![object, target],
                ConditionTemplate::ArticulationAtLeast { object, .. }
                | ConditionTemplate::ArticulationAtMost { object, .. }
                | ConditionTemplate::HeightGain { object, .. }
                | ConditionTemplate::Attached { object, .. } => vec![object],
            };
            if let Some(bad) = refs.into_iter().find(|&r| r >= n) {
                return Err(self.invalid(format!("success term references object {bad}")));
            }
        }
        self.expand_description(&self.colors(&[]))?;
        Ok(())
    }

    fn colors(&self, recolor: &[(usize, Color)]) -> Vec<Color> {
        let mut c: Vec<Color> = self.objects.iter().map(|o| o.color).collect();
        for &(i, col) in recolor {
            if i < c.len() {
                c[i] = col;
            }
        }
        c
    }

    fn expand_description(&self, colors: &[Color]) -> Result<String, FamilyError> {
        let mut out = String::new();
        let mut rest = self.description.as_str();
        while let Some(open) = rest.find('{') {
            out.push_str(&rest[..open]);
            let close = rest[open..]
                .find('}')
                .ok_or_else(|| self.invalid("unclosed `{` in description"))?;
            let key = &rest[open + 1..open + close];
            let i: usize = key
                .parse()
                .map_err(|_| self.invalid(format!("bad placeholder `{{{key}}}`")))?;
            let c = colors
                .get(i)
                .ok_or_else(|| self.invalid(format!("placeholder {{{i}}} has no object")))?;
            out.push_str(c.token());
            rest = &rest[open + close + 1..];
        }
        out.push_str(rest);
        crate::high_level_planner::parse_task(&out)
            .map_err(|e| self.invalid(format!("description `{out}`: {e}")))?;
        Ok(out)
    }

    /// Description with every object at its nominal colour.
    pub fn nominal_description(&self) -> String {
        self.expand_description(&self.colors(&[]))
            .unwrap_or_else(|_| self.description.clone())
    }

    pub fn description_with(&self, recolor: &[(usize, Color)]) -> Result<String, FamilyError> {
        self.expand_description(&self.colors(recolor))
    }

    /// Draws one task. Deterministic in `seed`.
    pub fn sample(
        &self,
        placement: &Placement,
        defaults: &SceneDefaults,
        task_id: &str,
        seed: u64,
    ) -> Result<SampledTask, FamilyError> {
        if !placement.region.is_valid() {
            return Err(self.invalid("empty placement region"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let colors = self.colors(&placement.recolor);
        let description = self.expand_description(&colors)?;
        for _ in 0..defaults.max_tries {
            let anchor = Vec3::new(
                draw(&mut rng, placement.region.x),
                draw(&mut rng, placement.region.y),
                defaults.table_z,
            );
            let scale = placement.scale.map_or(1.0, |r| draw(&mut rng, r));
            let mut objects = Vec::with_capacity(self.objects.len() + placement.distractors);
            for (i, t) in self.objects.iter().enumerate() {
                let jx = t.jitter * rng.random_range(-1.0..=1.0);
                let jy = t.jitter * rng.random_range(-1.0..=1.0);
                let at = Vec3::new(
                    anchor.x + t.offset[0] + jx,
                    anchor.y + t.offset[1] + jy,
                    0.0,
                );
                objects.push(instantiate(
                    t,
                    i as InstanceId + 1,
                    colors[i],
                    at,
                    scale,
                    defaults.table_z,
                ));
            }
            if !layout_ok(&objects, defaults) {
                continue;
            }
            let Some(extra) =
                self.distractors(&objects, placement.distractors, &colors, defaults, &mut rng)
            else {
                continue;
            };
            let mut success = self.success_terms(&objects);
            for d in &extra {
                success.push(Condition::Near {
                    object: d.instance_id,
                    target: NearTarget::Region(d.center()),
                    radius: 0.01,
                });
            }
            objects.extend(extra);
            let scene = Scene {
                objects,
                gripper: GripperState::new(defaults.home, UnitQuat::IDENTITY, 1.0),
                attached: None,
                table_extent: defaults.table_extent,
                rng_seed: seed,
            };
            return Ok(SampledTask {
                task: TaskInstance {
                    task_id: task_id.to_string(),
                    description,
                    scene,
                    success: SuccessPredicate::new(success),
                },
                anchor,
                scale,
            });
        }
        Err(FamilyError::Placement {
            family: self.name.clone(),
            tries: defaults.max_tries,
        })
    }

    fn success_terms(&self, objects: &[ObjectSpec]) -> Vec<Condition> {
        let id = |i: usize| objects[i].instance_id;
        self.success
            .iter()
            .map(|c| match *c {
                ConditionTemplate::ArticulationAtLeast { object, value } => {
                    Condition::ArticulationAtLeast {
                        object: id(object),
                        value,
                    }
                }
                ConditionTemplate::ArticulationAtMost { object, value } => {
                    Condition::ArticulationAtMost {
                        object: id(object),
                        value,
                    }
                }
                ConditionTemplate::NearObject {
                    object,
                    target,
                    radius,
                } => Condition::Near {
                    object: id(object),
                    target: NearTarget::Object(id(target)),
                    radius,
                },
                ConditionTemplate::HeightGain { object, gain } => Condition::HeightAtLeast {
                    object: id(object),
                    z: objects[object].center().z + gain,
                },
                ConditionTemplate::Attached { object, attached } => Condition::Attached {
                    object: id(object),
                    attached,
                },
            })
            .collect()
    }

    /// The first distractor repeats object 0 in an unused colour, the second
    /// is a tall solid post, the rest are plain blocks.
    fn distractors(
        &self,
        family: &[ObjectSpec],
        count: usize,
        used: &[Color],
        defaults: &SceneDefaults,
        rng: &mut ChaCha8Rng,
    ) -> Option<Vec<ObjectSpec>> {
        let free: Vec<Color> = Color::ALL
            .iter()
            .copied()
            .filter(|c| !used.contains(c))
            .collect();
        let mut placed: Vec<ObjectSpec> = vec![];
        let [[x0, x1], [y0, y1]] = defaults.table_extent;
        for k in 0..count {
            let id = (family.len() + k + 1) as InstanceId;
            let color = free[k % free.len()];
            let template = match k {
                0 => ObjectTemplate {
                    color,
                    ..self.objects[0].clone()
                },
                1 => post(Color::Black),
                _ => block(color),
            };
            let mut ok = None;
            for _ in 0..defaults.max_tries {
                let at = Vec3::new(
                    rng.random_range(x0 + 0.05..x1 - 0.05),
                    rng.random_range(y0 + 0.05..y1 - 0.05),
                    0.0,
                );
                let o = instantiate(&template, id, color, at, 1.0, defaults.table_z);
                let b = o.aabb();
                let clear_family = family
                    .iter()
                    .all(|f| planar_gap(&b, &f.aabb()) >= defaults.distractor_gap);
                let clear_others = placed
                    .iter()
                    .all(|p| planar_gap(&b, &p.aabb()) >= defaults.min_gap.max(0.05));
                if clear_family && clear_others && inside_table(&b, defaults) {
                    ok = Some(o);
                    break;
                }
            }
            placed.push(ok?);
        }
        Some(placed)
    }
}

fn post(color: Color) -> ObjectTemplate {
    ObjectTemplate {
        category: Category::Distractor,
        color,
        shape: Shape::Cylinder {
            radius: 0.03,
            height: 0.2,
        },
        articulation: Articulation::Fixed,
        value: 0.0,
        offset: [0.0, 0.0],
        jitter: 0.0,
    }
}

fn block(color: Color) -> ObjectTemplate {
    ObjectTemplate {
        category: Category::Block,
        color,
        shape: Shape::Box(Vec3::new(0.04, 0.04, 0.04)),
        articulation: Articulation::Fixed,
        value: 0.0,
        offset: [0.0, 0.0],
        jitter: 0.0,
    }
}

fn draw(rng: &mut ChaCha8Rng, r: [f64; 2]) -> f64 {
    if r[1] > r[0] {
        rng.random_range(r[0]..=r[1])
    } else {
        r[0]
    }
}

fn instantiate(
    t: &ObjectTemplate,
    id: InstanceId,
    color: Color,
    at: Vec3,
    scale: f64,
    table_z: f64,
) -> ObjectSpec {
    let shape = t.shape.scaled(scale);
    let articulation = match t.articulation {
        Articulation::Pressable { travel } => Articulation::Pressable {
            travel: travel * scale,
        },
        a => a,
    };
    let mut center = Vec3::new(at.x, at.y, table_z + shape.half_extents().z);
    if let Articulation::Prismatic { axis, range } = articulation {
        center += axis.normalized().unwrap_or(Vec3::Y) * (range * t.value);
    }
    ObjectSpec {
        instance_id: id,
        category: t.category,
        shape,
        color,
        pose: RigidTransform::from_translation(center),
        articulation,
        articulation_value: t.value,
        scale,
    }
}

fn planar_gap(a: &Aabb, b: &Aabb) -> f64 {
    let dx = (a.min.x - b.max.x).max(b.min.x - a.max.x).max(0.0);
    let dy = (a.min.y - b.max.y).max(b.min.y - a.max.y).max(0.0);
    if dx == 0.0 && dy == 0.0 {
        // overlapping footprints
        return -1.0;
    }
    dx.hypot(dy)
}

fn inside_table(b: &Aabb, d: &SceneDefaults) -> bool {
    let [[x0, x1], [y0, y1]] = d.table_extent;
    b.min.x >= x0 && b.max.x <= x1 && b.min.y >= y0 && b.max.y <= y1
}

fn layout_ok(objects: &[ObjectSpec], d: &SceneDefaults) -> bool {
    let boxes: Vec<Aabb> = objects.iter().map(|o| o.aabb()).collect();
    boxes.iter().all(|b| inside_table(b, d))
        && boxes
            .iter()
            .enumerate()
            .all(|(i, a)| boxes[i + 1..].iter().all(|b| planar_gap(a, b) >= d.min_gap))
}
