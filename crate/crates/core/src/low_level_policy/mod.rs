//! Skill-conditioned low-level policy. Given a skill embedding and a
//! canonicalized object cloud it returns a canonical gripper trajectory by
//! retrieving the closest library entry of that skill, optionally aligned to
//! the query by principal frames and refined with point-to-point ICP.

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    apply_transform, chamfer_arrays, nearest_indices, principal_frame, GeometryError, PointCloud,
    RigidTransform, UnitQuat, Vec3,
};
use crate::skill_discovery::{CanonicalSkill, SkillLabel, SkillLibrary};
use crate::world::Trajectory;

/// One-hot vector over the skill set, in `SkillLabel::ALL` order.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SkillEmbedding {
    pub vector: [f64; 9],
}

impl SkillEmbedding {
    pub fn of(label: SkillLabel) -> Self {
        let mut vector = [0.0; 9];
        vector[label.index()] = 1.0;
        SkillEmbedding { vector }
    }

    pub fn label(&self) -> SkillLabel {
        let mut best = 0;
        for (i, v) in self.vector.iter().enumerate() {
            if *v > self.vector[best] {
                best = i;
            }
        }
        SkillLabel::ALL[best]
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("unknown skill `{0}`")]
    UnknownSkill(String),
    #[error("library has no `{0}` entries")]
    NoEntries(SkillLabel),
    #[error("indicator channel has {got} values for {points} points")]
    ChannelLength { got: usize, points: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

pub fn embed_skill(token: &str) -> Result<SkillEmbedding, PolicyError> {
    token
        .parse::<SkillLabel>()
        .map(SkillEmbedding::of)
        .map_err(|_| PolicyError::UnknownSkill(token.to_string()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    /// Align entries to the query by principal frames before matching.
    pub rotation_canonical: bool,
    /// Pick uniformly among this many nearest entries.
    pub k_neighbors: usize,
    pub icp_refine: bool,
    pub icp_max_iters: usize,
    /// Distances this close to the best count as ties, broken by lowest index.
    pub tie_tolerance: f64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            rotation_canonical: false,
            k_neighbors: 1,
            icp_refine: false,
            icp_max_iters: 20,
            tie_tolerance: 1e-9,
        }
    }
}

/// The retrieved entry and the transform taking it onto the query.
#[derive(Clone, Debug, PartialEq)]
pub struct Retrieval {
    pub entry: usize,
    pub distance: f64,
    pub alignment: RigidTransform,
}

fn arrays4(cloud: &PointCloud, channel: Option<&[f64]>) -> Vec<[f64; 4]> {
    cloud
        .points()
        .iter()
        .enumerate()
        .map(|(i, p)| [p.x, p.y, p.z, channel.map_or(0.0, |c| c[i])])
        .collect()
}

fn match_distance(
    query: &PointCloud,
    query_channel: Option<&[f64]>,
    entry: &PointCloud,
    entry_channel: Option<&[f64]>,
) -> Result<f64, GeometryError> {
    if query_channel.is_none() && entry_channel.is_none() {
        return chamfer_arrays(&query.as_arrays(), &entry.as_arrays());
    }
    chamfer_arrays(
        &arrays4(query, query_channel),
        &arrays4(entry, entry_channel),
    )
}

/// The proper sign flips of a principal frame.
fn flips() -> [UnitQuat; 4] {
    [
        UnitQuat::IDENTITY,
        UnitQuat::from_axis_angle(Vec3::X, std::f64::consts::PI),
        UnitQuat::from_axis_angle(Vec3::Y, std::f64::consts::PI),
        UnitQuat::from_axis_angle(Vec3::Z, std::f64::consts::PI),
    ]
}

/// Best principal-frame alignment of `entry` onto `query`, or the identity
/// when either frame is degenerate.
fn frame_alignment(
    query: &PointCloud,
    query_channel: Option<&[f64]>,
    e: &CanonicalSkill,
) -> Result<(RigidTransform, f64), GeometryError> {
    let identity = || -> Result<_, GeometryError> {
        let d = match_distance(query, query_channel, &e.cloud_c, e.channel.as_deref())?;
        Ok((RigidTransform::IDENTITY, d))
    };
    let (Ok(fq), Ok(fe)) = (principal_frame(query), principal_frame(&e.cloud_c)) else {
        return identity();
    };
    let mut best: Option<(RigidTransform, f64)> = None;
    for flip in flips() {
        let a = fq
            .inverse()
            .compose(&RigidTransform::from_rotation(flip))
            .compose(&fe);
        let moved = apply_transform(&a, &e.cloud_c);
        let d = match_distance(query, query_channel, &moved, e.channel.as_deref())?;
        if best.as_ref().is_none_or(|b| d < b.1) {
            best = Some((a, d));
        }
    }
    Ok(best.expect("four candidates"))
}

/// Least-squares rigid transform taking `src[i]` onto `dst[i]`.
pub fn kabsch(src: &[Vec3], dst: &[Vec3]) -> RigidTransform {
    let n = src.len().min(dst.len());
    if n == 0 {
        return RigidTransform::IDENTITY;
    }
    let mean = |v: &[Vec3]| v[..n].iter().fold(Vec3::ZERO, |a, p| a + *p) / n as f64;
    let (cs, cd) = (mean(src), mean(dst));
    let mut h = Matrix3::zeros();
    for i in 0..n {
        let a = src[i] - cs;
        let b = dst[i] - cd;
        h += Vector3::new(a.x, a.y, a.z) * Vector3::new(b.x, b.y, b.z).transpose();
    }
    let svd = h.svd(true, true);
    let (Some(u), Some(vt)) = (svd.u, svd.v_t) else {
        return RigidTransform::from_translation(cd - cs);
    };
    let v = vt.transpose();
    let mut d = Matrix3::identity();
    if (v * u.transpose()).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    let r = v * d * u.transpose();
    let m = [
        [r[(0, 0)], r[(0, 1)], r[(0, 2)]],
        [r[(1, 0)], r[(1, 1)], r[(1, 2)]],
        [r[(2, 0)], r[(2, 1)], r[(2, 2)]],
    ];
    let rotation = UnitQuat::from_matrix(m).unwrap_or_default();
    RigidTransform::new(rotation, cd - rotation.rotate(cs))
}

/// Point-to-point ICP of `source` (already moved by `init`) onto `target`.
pub fn icp(
    source: &PointCloud,
    target: &PointCloud,
    init: RigidTransform,
    max_iters: usize,
) -> RigidTransform {
    let mut t = init;
    for _ in 0..max_iters {
        let moved: Vec<Vec3> = source.points().iter().map(|p| t.apply(*p)).collect();
        let nn = nearest_indices(&moved, target);
        let dst: Vec<Vec3> = nn.iter().map(|&j| target.points()[j]).collect();
        let step = kabsch(&moved, &dst);
        t = step.compose(&t);
        if step.translation.norm() < 1e-9 && step.rotation.angle() < 1e-9 {
            break;
        }
    }
    t
}

/// Ranks the entries of `label` against the query and picks one.
pub fn retrieve(
    lib: &SkillLibrary,
    label: SkillLabel,
    query: &PointCloud,
    channel: Option<&[f64]>,
    cfg: &PolicyConfig,
    seed: u64,
) -> Result<Retrieval, PolicyError> {
    if let Some(c) = channel {
        if c.len() != query.len() {
            return Err(PolicyError::ChannelLength {
                got: c.len(),
                points: query.len(),
            });
        }
    }
    let idx = lib.indices(label);
    if idx.is_empty() {
        return Err(PolicyError::NoEntries(label));
    }
    let mut ranked = Vec::with_capacity(idx.len());
    for &i in idx {
        let e = &lib.entries()[i];
        let (alignment, distance) = if cfg.rotation_canonical {
            frame_alignment(query, channel, e)?
        } else {
            let d = match_distance(query, channel, &e.cloud_c, e.channel.as_deref())?;
            (RigidTransform::IDENTITY, d)
        };
        ranked.push(Retrieval {
            entry: i,
            distance,
            alignment,
        });
    }
    let best = ranked
        .iter()
        .map(|r| r.distance)
        .fold(f64::INFINITY, f64::min);
    let tied = |r: &Retrieval| r.distance <= best + cfg.tie_tolerance;
    ranked.sort_by(|a, b| {
        tied(b)
            .cmp(&tied(a))
            .then_with(|| {
                if tied(a) && tied(b) {
                    std::cmp::Ordering::Equal
                } else {
                    a.distance.total_cmp(&b.distance)
                }
            })
            .then(a.entry.cmp(&b.entry))
    });
    let k = cfg.k_neighbors.clamp(1, ranked.len());
    let pick = if k == 1 {
        0
    } else {
        ChaCha8Rng::seed_from_u64(seed).random_range(0..k)
    };
    let mut r = ranked.swap_remove(pick);
    if cfg.icp_refine {
        let e = &lib.entries()[r.entry];
        r.alignment = icp(&e.cloud_c, query, r.alignment, cfg.icp_max_iters);
    }
    Ok(r)
}

/// Canonical trajectory for the skill in `embedding` on the canonical cloud.
pub fn infer_canonical_trajectory(
    lib: &SkillLibrary,
    embedding: &SkillEmbedding,
    cloud_c: &PointCloud,
    channel: Option<&[f64]>,
    cfg: &PolicyConfig,
    seed: u64,
) -> Result<Trajectory, PolicyError> {
    let r = retrieve(lib, embedding.label(), cloud_c, channel, cfg, seed)?;
    Ok(lib.entries()[r.entry].traj_c.transformed(&r.alignment))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::Variant;
    use crate::skill_discovery::{AnchorMode, LibraryMeta};
    use crate::world::GripperState;

    fn meta() -> LibraryMeta {
        LibraryMeta {
            variant: Variant::Complete,
            anchor_mode: AnchorMode::Centroid,
            augment: 1,
            seed: 0,
        }
    }

    fn box_cloud(sx: f64, sy: f64, sz: f64) -> PointCloud {
        let mut pts = vec![];
        for i in 0..6 {
            for j in 0..4 {
                for k in 0..3 {
                    pts.push(Vec3::new(
                        sx * (i as f64 / 5.0 - 0.5),
                        sy * (j as f64 / 3.0 - 0.5),
                        sz * (k as f64 / 2.0 - 0.5),
                    ));
                }
            }
        }
        PointCloud::new(pts).unwrap()
    }

    fn entry(label: SkillLabel, cloud: PointCloud, z: f64) -> CanonicalSkill {
        let s = GripperState::new(Vec3::new(0.0, 0.0, z), UnitQuat::IDENTITY, 1.0);
        CanonicalSkill {
            label,
            cloud_c: cloud,
            channel: None,
            traj_c: Trajectory::new(vec![s, s.with_aperture(0.0)]).unwrap(),
            anchor: Vec3::ZERO,
            source: (0, 0),
        }
    }

    #[test]
    fn one_hot() {
        let e = SkillEmbedding::of(SkillLabel::Press);
        assert_eq!(e.vector[0], 1.0);
        assert_eq!(e.vector.iter().sum::<f64>(), 1.0);
        assert_eq!(embed_skill("screw").unwrap().label(), SkillLabel::Screw);
        assert_eq!(
            embed_skill("jump"),
            Err(PolicyError::UnknownSkill("jump".into()))
        );
    }

    #[test]
    fn nearest_entry_of_the_right_label() {
        let lib = SkillLibrary::new(
            meta(),
            vec![
                entry(SkillLabel::Pick, box_cloud(0.04, 0.04, 0.04), 0.1),
                entry(SkillLabel::Pick, box_cloud(0.2, 0.1, 0.05), 0.2),
                entry(SkillLabel::Press, box_cloud(0.2, 0.1, 0.05), 0.3),
            ],
        );
        let cfg = PolicyConfig::default();
        let q = box_cloud(0.19, 0.1, 0.05);
        let t = infer_canonical_trajectory(
            &lib,
            &SkillEmbedding::of(SkillLabel::Pick),
            &q,
            None,
            &cfg,
            0,
        )
        .unwrap();
        assert_eq!(t.steps()[0].position.z, 0.2);
        assert_eq!(
            retrieve(&lib, SkillLabel::Screw, &q, None, &cfg, 0),
            Err(PolicyError::NoEntries(SkillLabel::Screw))
        );
    }

    #[test]
    fn ties_go_to_the_lowest_index() {
        let c = box_cloud(0.1, 0.05, 0.02);
        let lib = SkillLibrary::new(
            meta(),
            vec![
                entry(SkillLabel::Pick, c.clone(), 0.1),
                entry(SkillLabel::Pick, c.clone(), 0.2),
            ],
        );
        let r = retrieve(
            &lib,
            SkillLabel::Pick,
            &c,
            None,
            &PolicyConfig::default(),
            0,
        )
        .unwrap();
        assert_eq!(r.entry, 0);
    }

    #[test]
    fn rounding_level_gaps_are_ties() {
        let c = box_cloud(0.1, 0.05, 0.02);
        let nudged = c.translated(Vec3::new(1e-13, 0.0, 0.0));
        let lib = SkillLibrary::new(
            meta(),
            vec![
                entry(SkillLabel::Pick, nudged, 0.1),
                entry(SkillLabel::Pick, c.clone(), 0.2),
            ],
        );
        let r = retrieve(
            &lib,
            SkillLabel::Pick,
            &c,
            None,
            &PolicyConfig::default(),
            0,
        )
        .unwrap();
        assert_eq!(r.entry, 0);
        let strict = PolicyConfig {
            tie_tolerance: 0.0,
            ..Default::default()
        };
        assert_eq!(
            retrieve(&lib, SkillLabel::Pick, &c, None, &strict, 0)
                .unwrap()
                .entry,
            1
        );
    }

    #[test]
    fn frame_alignment_undoes_a_yaw() {
        let c = box_cloud(0.2, 0.1, 0.05);
        let rot = RigidTransform::from_rotation(UnitQuat::from_yaw(0.7));
        let q = apply_transform(&rot, &c);
        let mut e = entry(SkillLabel::Pick, c, 0.0);
        e.traj_c = Trajectory::new(vec![GripperState::new(
            Vec3::new(0.1, 0.0, 0.0),
            UnitQuat::IDENTITY,
            1.0,
        )])
        .unwrap();
        let lib = SkillLibrary::new(meta(), vec![e]);
        let cfg = PolicyConfig {
            rotation_canonical: true,
            icp_refine: true,
            ..Default::default()
        };
        let r = retrieve(&lib, SkillLabel::Pick, &q, None, &cfg, 0).unwrap();
        assert!(r.distance < 1e-9, "{}", r.distance);
        let t = infer_canonical_trajectory(
            &lib,
            &SkillEmbedding::of(SkillLabel::Pick),
            &q,
            None,
            &cfg,
            0,
        )
        .unwrap();
        let want = rot.apply(Vec3::new(0.1, 0.0, 0.0));
        assert!(t.steps()[0].position.distance(want) < 1e-9);
    }

    #[test]
    fn kabsch_recovers_a_transform() {
        let src = box_cloud(0.3, 0.2, 0.1).into_points();
        let t = RigidTransform::new(
            UnitQuat::from_axis_angle(Vec3::new(1.0, 2.0, 3.0), 0.4),
            Vec3::new(0.1, -0.2, 0.3),
        );
        let dst: Vec<Vec3> = src.iter().map(|p| t.apply(*p)).collect();
        let k = kabsch(&src, &dst);
        assert!(k.translation.distance(t.translation) < 1e-9);
        assert!(k.rotation.angle_to(t.rotation) < 1e-9);
    }
}
