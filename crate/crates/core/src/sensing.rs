//! Instance-labelled world-frame point clouds sampled from object surfaces,
//! with a seeded noise model, and mask lifting.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{PointCloud, Vec3};
use crate::world::{Articulation, InstanceId, ObjectSpec, Scene, Shape};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SensingError {
    #[error("no points carry label {0}")]
    EmptyMask(InstanceId),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorNoise {
    /// Standard deviation of isotropic Gaussian jitter (m).
    pub jitter_sigma: f64,
    pub dropout_prob: f64,
    /// Per-point probability of taking the label of the nearest other object.
    pub mask_bleed_prob: f64,
    /// Merge drawers with the objects touching them under one label.
    pub merge_parts: bool,
}

impl SensorNoise {
    pub fn is_valid(&self) -> bool {
        let p = |v: f64| (0.0..=1.0).contains(&v);
        self.jitter_sigma >= 0.0
            && self.jitter_sigma.is_finite()
            && p(self.dropout_prob)
            && p(self.mask_bleed_prob)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensingConfig {
    pub points_per_object: usize,
    /// Distance under which two boxes count as touching for part merging.
    pub merge_distance: f64,
}

impl Default for SensingConfig {
    fn default() -> Self {
        SensingConfig {
            points_per_object: 400,
            merge_distance: 0.01,
        }
    }
}

/// World-frame points with one instance label per point.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledCloud {
    points: PointCloud,
    labels: Vec<InstanceId>,
}

impl LabeledCloud {
    pub fn new(points: PointCloud, labels: Vec<InstanceId>) -> Option<Self> {
        (points.len() == labels.len()).then_some(LabeledCloud { points, labels })
    }

    pub fn points(&self) -> &PointCloud {
        &self.points
    }

    pub fn labels(&self) -> &[InstanceId] {
        &self.labels
    }

    pub fn contains_label(&self, id: InstanceId) -> bool {
        self.labels.contains(&id)
    }

    pub fn translated(&self, t: Vec3) -> LabeledCloud {
        LabeledCloud {
            points: self.points.translated(t),
            labels: self.labels.clone(),
        }
    }
}

/// Exactly the points labelled `id`, in cloud order.
pub fn lift_mask(cloud: &LabeledCloud, id: InstanceId) -> Result<PointCloud, SensingError> {
    let pts: Vec<Vec3> = cloud
        .points
        .points()
        .iter()
        .zip(&cloud.labels)
        .filter(|(_, l)| **l == id)
        .map(|(p, _)| *p)
        .collect();
    PointCloud::new(pts).map_err(|_| SensingError::EmptyMask(id))
}

/// Samples every object, then applies jitter, dropout, mask bleed and part
/// merging in that order. A scene without objects yields `None`.
pub fn observe(
    scene: &Scene,
    noise: &SensorNoise,
    cfg: &SensingConfig,
    seed: u64,
) -> Option<LabeledCloud> {
    let mut pts = vec![];
    let mut labels = vec![];
    for o in &scene.objects {
        for p in object_surface(o, cfg.points_per_object) {
            pts.push(p);
            labels.push(o.instance_id);
        }
    }
    if pts.is_empty() {
        return None;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    if noise.jitter_sigma > 0.0 {
        if let Ok(n) = Normal::new(0.0, noise.jitter_sigma) {
            for p in &mut pts {
                *p += Vec3::new(n.sample(&mut rng), n.sample(&mut rng), n.sample(&mut rng));
            }
        }
    }

    if noise.dropout_prob > 0.0 {
        let keep: Vec<bool> = (0..pts.len())
            .map(|_| !rng.random_bool(noise.dropout_prob))
            .collect();
        let (p, l) = retain_with_floor(&pts, &labels, &keep);
        pts = p;
        labels = l;
    }

    if noise.mask_bleed_prob > 0.0 && scene.objects.len() > 1 {
        let centers: Vec<(InstanceId, Vec3)> = scene
            .objects
            .iter()
            .map(|o| (o.instance_id, o.center()))
            .collect();
        let mut remaining = count_by_label(&labels);
        for i in 0..pts.len() {
            if !rng.random_bool(noise.mask_bleed_prob) {
                continue;
            }
            let own = labels[i];
            let left = remaining
                .iter_mut()
                .find(|(l, _)| *l == own)
                .map(|(_, c)| c);
            // an object always keeps its last point
            let Some(left) = left.filter(|c| **c > 1) else {
                continue;
            };
            let other = centers
                .iter()
                .filter(|(id, _)| *id != own)
                .min_by(|a, b| {
                    a.1.distance(pts[i])
                        .total_cmp(&b.1.distance(pts[i]))
                        .then(a.0.cmp(&b.0))
                })
                .map(|(id, _)| *id);
            if let Some(other) = other {
                *left -= 1;
                labels[i] = other;
                if let Some((_, c)) = remaining.iter_mut().find(|(l, _)| *l == other) {
                    *c += 1;
                }
            }
        }
    }

    if noise.merge_parts {
        merge_parts(scene, cfg.merge_distance, &mut labels);
    }

    let points = PointCloud::new(pts).ok()?;
    Some(LabeledCloud { points, labels })
}

fn count_by_label(labels: &[InstanceId]) -> Vec<(InstanceId, usize)> {
    let mut out: Vec<(InstanceId, usize)> = vec![];
    for &l in labels {
        match out.iter_mut().find(|(x, _)| *x == l) {
            Some((_, c)) => *c += 1,
            None => out.push((l, 1)),
        }
    }
    out
}

fn retain_with_floor(
    pts: &[Vec3],
    labels: &[InstanceId],
    keep: &[bool],
) -> (Vec<Vec3>, Vec<InstanceId>) {
    let mut keep = keep.to_vec();
    for (id, _) in count_by_label(labels) {
        let idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == id).collect();
        if !idx.iter().any(|&i| keep[i]) {
            keep[idx[0]] = true;
        }
    }
    let mut p = vec![];
    let mut l = vec![];
    for i in 0..pts.len() {
        if keep[i] {
            p.push(pts[i]);
            l.push(labels[i]);
        }
    }
    (p, l)
}

/// Every drawer and the objects whose boxes touch it share the lowest id of
/// the group, mimicking a segmenter that sees cabinet and drawer as one.
fn merge_parts(scene: &Scene, distance: f64, labels: &mut [InstanceId]) {
    for d in &scene.objects {
        if !matches!(d.articulation, Articulation::Prismatic { .. }) {
            continue;
        }
        let b = d.aabb().inflated(distance);
        let group: Vec<InstanceId> = scene
            .objects
            .iter()
            .filter(|o| o.instance_id == d.instance_id || o.aabb().overlaps_strictly(&b, 0.0))
            .map(|o| o.instance_id)
            .collect();
        let Some(&root) = group.iter().min() else {
            continue;
        };
        for l in labels.iter_mut() {
            if group.contains(l) {
                *l = root;
            }
        }
    }
}

/// Deterministic, symmetric surface samples of one object in world frame.
/// Opposite faces and rings carry equal counts, so the sample centroid of a
/// box, cylinder or sphere is its centre.
pub fn object_surface(o: &ObjectSpec, n: usize) -> Vec<Vec3> {
    let n = n.max(1);
    let mut local = match o.shape {
        Shape::Box(size) => box_surface(size, n, Vec3::ZERO),
        Shape::Cylinder { radius, height } => cylinder_surface(radius, height, n),
        Shape::Sphere { radius } => sphere_surface(radius, n),
    };
    if let (Articulation::Prismatic { axis, .. }, Shape::Box(size)) = (o.articulation, o.shape) {
        local.extend(handle_surface(o, axis, size, n));
    }
    local.into_iter().map(|p| o.pose.apply(p)).collect()
}

/// A small bar in front of the drawer face whose outer face holds the
/// handle point.
fn handle_surface(o: &ObjectSpec, axis: Vec3, size: Vec3, n: usize) -> Vec<Vec3> {
    let Some(a) = axis.normalized() else {
        return vec![];
    };
    // handle geometry is expressed in the world frame, drawers are unrotated
    let half = size * 0.5;
    let reach = (a.x * half.x).abs() + (a.y * half.y).abs() + (a.z * half.z).abs();
    let depth = 0.02;
    let center = a * (reach + depth * 0.5);
    let bar = if a.x.abs() > a.y.abs() {
        Vec3::new(depth, size.y * 0.4, 0.015)
    } else {
        Vec3::new(size.x * 0.4, depth, 0.015)
    };
    let count = (n / 12).max(8);
    let inv = o.pose.rotation.inverse();
    box_surface(bar, count, Vec3::ZERO)
        .into_iter()
        .map(|p| inv.rotate(p + center))
        .collect()
}

fn grid(m: usize, a: f64, b: f64) -> (usize, usize) {
    let r = ((m as f64 * a / b).sqrt().round() as usize).max(1);
    let c = ((m as f64 / r as f64).round() as usize).max(1);
    (r, c)
}

fn box_surface(size: Vec3, n: usize, offset: Vec3) -> Vec<Vec3> {
    let h = size * 0.5;
    let faces = [
        (size.y * size.z, 0usize),
        (size.x * size.z, 1),
        (size.x * size.y, 2),
    ];
    let total: f64 = faces.iter().map(|f| f.0).sum();
    let mut out = vec![];
    for (area, axis) in faces {
        let m = ((n as f64 * 0.5 * area / total).round() as usize).max(1);
        let (u_axis, v_axis) = match axis {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        let (lu, lv) = (size.component(u_axis), size.component(v_axis));
        let (r, c) = grid(m, lu, lv);
        for sign in [1.0, -1.0] {
            for i in 0..r {
                for j in 0..c {
                    let mut p = [0.0; 3];
                    p[axis] = sign * h.component(axis);
                    p[u_axis] = ((i as f64 + 0.5) / r as f64 - 0.5) * lu;
                    p[v_axis] = ((j as f64 + 0.5) / c as f64 - 0.5) * lv;
                    out.push(Vec3::from(p) + offset);
                }
            }
        }
    }
    out
}

fn ring(radius: f64, z: f64, count: usize, phase: f64) -> impl Iterator<Item = Vec3> {
    (0..count).map(move |k| {
        let a = phase + TAU * k as f64 / count as f64;
        Vec3::new(radius * a.cos(), radius * a.sin(), z)
    })
}

fn cylinder_surface(radius: f64, height: f64, n: usize) -> Vec<Vec3> {
    let side = TAU * radius * height;
    let disc = PI * radius * radius;
    let total = side + 2.0 * disc;
    let n_side = ((n as f64 * side / total).round() as usize).max(1);
    let n_disc = ((n as f64 * disc / total).round() as usize).max(1);
    let mut out = vec![];
    let (rows, cols) = grid(n_side, height, TAU * radius);
    for i in 0..rows {
        let z = ((i as f64 + 0.5) / rows as f64 - 0.5) * height;
        out.extend(ring(radius, z, cols, 0.0));
    }
    // concentric rings on each cap, point count proportional to ring radius
    let rings = ((n_disc as f64 / PI).sqrt().round() as usize).max(1);
    let weight: f64 = (0..rings).map(|j| j as f64 + 0.5).sum();
    for z in [height * 0.5, -height * 0.5] {
        for j in 0..rings {
            let r = radius * (j as f64 + 0.5) / rings as f64;
            let count = ((n_disc as f64 * (j as f64 + 0.5) / weight).round() as usize).max(3);
            out.extend(ring(r, z, count, 0.0));
        }
    }
    out
}

fn sphere_surface(radius: f64, n: usize) -> Vec<Vec3> {
    let rings = ((n as f64 * PI / 4.0).sqrt().round() as usize).max(2);
    let weight: f64 = (0..rings)
        .map(|j| (PI * (j as f64 + 0.5) / rings as f64).sin())
        .sum();
    let mut out = vec![];
    for j in 0..rings {
        let theta = PI * (j as f64 + 0.5) / rings as f64;
        let count = ((n as f64 * theta.sin() / weight).round() as usize).max(3);
        out.extend(ring(radius * theta.sin(), radius * theta.cos(), count, 0.0));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{RigidTransform, UnitQuat};
    use crate::world::{Category, Color, GripperState};

    fn cube(id: InstanceId, at: Vec3) -> ObjectSpec {
        ObjectSpec {
            instance_id: id,
            category: Category::Block,
            shape: Shape::Box(Vec3::new(1.0, 1.0, 1.0)),
            color: Color::Red,
            pose: RigidTransform::from_translation(at),
            articulation: Articulation::Fixed,
            articulation_value: 0.0,
            scale: 1.0,
        }
    }

    fn scene(objects: Vec<ObjectSpec>) -> Scene {
        Scene {
            objects,
            gripper: GripperState::new(Vec3::new(0.0, 0.0, 2.0), UnitQuat::IDENTITY, 1.0),
            attached: None,
            table_extent: [[-1.0, 1.0], [-1.0, 1.0]],
            rng_seed: 0,
        }
    }

    #[test]
    fn unit_cube_centroid() {
        let s = scene(vec![cube(4, Vec3::ZERO)]);
        let c = observe(&s, &SensorNoise::default(), &SensingConfig::default(), 1).unwrap();
        assert!(c.labels().iter().all(|&l| l == 4));
        assert!(c.points().centroid().norm() < 1e-3);
        let n = c.points().len();
        assert!((300..=500).contains(&n), "{n} points");
    }

    #[test]
    fn shapes_sample_on_their_surface() {
        let mut o = cube(1, Vec3::ZERO);
        o.shape = Shape::Cylinder {
            radius: 0.04,
            height: 0.1,
        };
        let pts = object_surface(&o, 400);
        assert!(PointCloud::new(pts.clone()).unwrap().centroid().norm() < 1e-12);
        for p in &pts {
            let radial = (p.x * p.x + p.y * p.y).sqrt();
            assert!((radial - 0.04).abs() < 1e-12 || (p.z.abs() - 0.05).abs() < 1e-12);
        }
        o.shape = Shape::Sphere { radius: 0.1 };
        let pts = object_surface(&o, 400);
        assert!(pts.iter().all(|p| (p.norm() - 0.1).abs() < 1e-12));
        assert!(PointCloud::new(pts).unwrap().centroid().norm() < 1e-12);
    }

    #[test]
    fn dropout_keeps_one_point_per_object() {
        let s = scene(vec![cube(1, Vec3::ZERO), cube(2, Vec3::new(3.0, 0.0, 0.0))]);
        let noise = SensorNoise {
            dropout_prob: 1.0,
            ..Default::default()
        };
        let c = observe(&s, &noise, &SensingConfig::default(), 9).unwrap();
        assert_eq!(c.labels(), &[1, 2]);
        assert!(lift_mask(&c, 1).is_ok() && lift_mask(&c, 2).is_ok());
    }

    #[test]
    fn same_seed_same_cloud() {
        let s = scene(vec![cube(1, Vec3::ZERO), cube(2, Vec3::new(3.0, 0.0, 0.0))]);
        let noise = SensorNoise {
            jitter_sigma: 0.01,
            dropout_prob: 0.2,
            mask_bleed_prob: 0.1,
            merge_parts: false,
        };
        let cfg = SensingConfig::default();
        assert_eq!(observe(&s, &noise, &cfg, 5), observe(&s, &noise, &cfg, 5));
        assert_ne!(observe(&s, &noise, &cfg, 5), observe(&s, &noise, &cfg, 6));
    }

    #[test]
    fn lift_partitions_the_cloud() {
        let s = scene(vec![cube(1, Vec3::ZERO), cube(2, Vec3::new(3.0, 0.0, 0.0))]);
        let c = observe(&s, &SensorNoise::default(), &SensingConfig::default(), 0).unwrap();
        let a = lift_mask(&c, 1).unwrap();
        let b = lift_mask(&c, 2).unwrap();
        assert_eq!(a.len() + b.len(), c.points().len());
        assert_eq!(lift_mask(&c, 7), Err(SensingError::EmptyMask(7)));
        let single = scene(vec![cube(3, Vec3::ZERO)]);
        let c = observe(
            &single,
            &SensorNoise::default(),
            &SensingConfig::default(),
            0,
        )
        .unwrap();
        assert_eq!(&lift_mask(&c, 3).unwrap(), c.points());
    }

    #[test]
    fn merge_parts_joins_touching_drawer() {
        let mut drawer = cube(5, Vec3::ZERO);
        drawer.category = Category::Drawer;
        drawer.articulation = Articulation::Prismatic {
            axis: Vec3::new(0.0, -1.0, 0.0),
            range: 0.1,
        };
        let cabinet = cube(2, Vec3::new(0.0, 1.005, 0.0));
        let s = scene(vec![drawer, cabinet, cube(9, Vec3::new(3.0, 0.0, 0.0))]);
        let noise = SensorNoise {
            merge_parts: true,
            ..Default::default()
        };
        let c = observe(&s, &noise, &SensingConfig::default(), 0).unwrap();
        assert!(!c.contains_label(5));
        assert!(c.contains_label(2) && c.contains_label(9));
    }
}
