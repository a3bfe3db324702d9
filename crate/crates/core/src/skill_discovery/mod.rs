//! Training-time decomposition of demonstrations into object-centric skills
//! and the canonical skill library built from them.

mod io;
mod segment;

pub use io::{load_library, read_library, save_library, write_library, LIBRARY_HEADER};
pub use segment::{
    event_log, flag_low_confidence, flag_segments, segment_demo, Event, Segment, SegmentKind,
    Warning, WarningKind,
};

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::demonstrations::Demo;
use crate::evaluation::Variant;
use crate::geometry::{PointCloud, Vec3};
use crate::high_level_planner::parse_task;
use crate::mix_seed;
use crate::sensing::{lift_mask, observe, LabeledCloud, SensingConfig, SensorNoise};
use crate::world::{InstanceId, Trajectory};

token_enum!(
    /// The predefined skill set; the declaration order fixes embedding indices.
    SkillLabel {
        Press => "press",
        Pick => "pick",
        Place => "place",
        Screw => "screw",
        Lift => "lift",
        PullOut => "pull_out",
        PushBack => "push_back",
        Open => "open",
        Close => "close",
    }
);

impl SkillLabel {
    pub fn index(&self) -> usize {
        SkillLabel::ALL.iter().position(|k| k == self).unwrap_or(0)
    }
}

token_enum!(AnchorMode {
    Centroid => "centroid",
    Random => "random",
});

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiscoveryError {
    #[error("no demonstrations")]
    NoDemos,
    #[error("gripper never comes near `{object}` in {step_count} steps")]
    NoInteraction { step_count: usize, object: String },
    #[error("`{label}` on `{object}` never completes")]
    IncompleteSkill { label: SkillLabel, object: String },
    #[error("demo {demo}: {error}")]
    InDemo {
        demo: usize,
        error: Box<DiscoveryError>,
    },
    #[error("{0}")]
    Invalid(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscoveryConfig {
    /// Radius around the target that opens an interaction segment.
    pub d_near: f64,
    /// Height gain that completes a lift.
    pub lift_height: f64,
    /// Width and weight of the target-indicator channel.
    pub heatmap_sigma: f64,
    pub heatmap_weight: f64,
}

impl Default for DiscoveryConfig {
    fn default() -> Self {
        DiscoveryConfig {
            d_near: 0.10,
            lift_height: 0.10,
            heatmap_sigma: 0.05,
            heatmap_weight: 0.2,
        }
    }
}

/// A skill before canonicalization: label, world-frame cloud, interaction
/// trajectory. `channel` is the optional per-point indicator.
#[derive(Clone, Debug, PartialEq)]
pub struct SkillTriplet {
    pub label: SkillLabel,
    pub target: InstanceId,
    pub object_cloud: PointCloud,
    pub channel: Option<Vec<f64>>,
    pub trajectory: Trajectory,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CanonicalSkill {
    pub label: SkillLabel,
    pub cloud_c: PointCloud,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel: Option<Vec<f64>>,
    pub traj_c: Trajectory,
    pub anchor: Vec3,
    /// `(demo index, segment index)`.
    pub source: (usize, usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LibraryMeta {
    pub variant: Variant,
    pub anchor_mode: AnchorMode,
    pub augment: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SkillLibrary {
    pub meta: LibraryMeta,
    entries: Vec<CanonicalSkill>,
    label_index: BTreeMap<SkillLabel, Vec<usize>>,
}

impl SkillLibrary {
    pub fn new(meta: LibraryMeta, entries: Vec<CanonicalSkill>) -> Self {
        let mut label_index: BTreeMap<SkillLabel, Vec<usize>> = BTreeMap::new();
        for (i, e) in entries.iter().enumerate() {
            label_index.entry(e.label).or_default().push(i);
        }
        SkillLibrary {
            meta,
            entries,
            label_index,
        }
    }

    pub fn entries(&self) -> &[CanonicalSkill] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entry indices for `label`, ascending.
    pub fn indices(&self, label: SkillLabel) -> &[usize] {
        self.label_index.get(&label).map_or(&[], |v| v.as_slice())
    }

    pub fn labels(&self) -> impl Iterator<Item = SkillLabel> + '_ {
        self.label_index.keys().copied()
    }
}

/// `P_c = P - t`, `τ_c = τ - t`; orientations and apertures are untouched.
pub fn canonicalize_with(
    triplet: &SkillTriplet,
    anchor: Vec3,
    source: (usize, usize),
) -> CanonicalSkill {
    CanonicalSkill {
        label: triplet.label,
        cloud_c: triplet.object_cloud.translated(-anchor),
        channel: triplet.channel.clone(),
        traj_c: triplet.trajectory.translated(-anchor),
        anchor,
        source,
    }
}

/// Centroid anchor, or a uniformly drawn stored point of the cloud.
pub fn canonicalize(
    triplet: &SkillTriplet,
    mode: AnchorMode,
    rng: &mut impl Rng,
    source: (usize, usize),
) -> CanonicalSkill {
    let anchor = match mode {
        AnchorMode::Centroid => triplet.object_cloud.centroid(),
        AnchorMode::Random => {
            let pts = triplet.object_cloud.points();
            pts[rng.random_range(0..pts.len())]
        }
    };
    canonicalize_with(triplet, anchor, source)
}

pub fn un_canonicalize(traj_c: &Trajectory, anchor: Vec3) -> Trajectory {
    traj_c.translated(anchor)
}

/// Per-point indicator `w · exp(-d² / 2σ²)` with `d` the distance to `center`.
pub fn heatmap_channel(cloud: &PointCloud, center: Vec3, cfg: &DiscoveryConfig) -> Vec<f64> {
    let s2 = 2.0 * cfg.heatmap_sigma * cfg.heatmap_sigma;
    cloud
        .points()
        .iter()
        .map(|p| cfg.heatmap_weight * (-(p.distance(center).powi(2)) / s2).exp())
        .collect()
}

/// The query-side observation for `variant`: the cloud the policy sees, its
/// optional indicator channel, and the mask centroid.
pub fn interface_cloud(
    variant: Variant,
    observation: &LabeledCloud,
    target: InstanceId,
    cfg: &DiscoveryConfig,
) -> Result<(PointCloud, Option<Vec<f64>>, Vec3), crate::sensing::SensingError> {
    let mask = lift_mask(observation, target)?;
    let c = mask.centroid();
    let p = variant.pipeline();
    Ok(if p.mask_only {
        (mask, None, c)
    } else if p.indicator_channel {
        let all = observation.points().clone();
        let ch = heatmap_channel(&all, c, cfg);
        (all, Some(ch), c)
    } else {
        (observation.points().clone(), None, c)
    })
}

/// Skill triplets of one demo under `variant`.
pub fn extract_triplets(
    demo: &Demo,
    variant: Variant,
    cfg: &DiscoveryConfig,
    sensing: &SensingConfig,
) -> Result<(Vec<Segment>, Vec<SkillTriplet>), DiscoveryError> {
    let plan =
        parse_task(&demo.task.description).map_err(|e| DiscoveryError::Invalid(e.to_string()))?;
    let segments = segment_demo(demo, &plan, cfg, sensing)?;
    let mut out = vec![];
    for s in &segments {
        let SegmentKind::Skill { label, target } = s.kind else {
            continue;
        };
        // the regular-skill ablation keeps the whole approach from step 0
        let start = if variant.pipeline().include_approach {
            0
        } else {
            s.start
        };
        let obs = observe(
            &demo.frames[start],
            &SensorNoise::default(),
            sensing,
            demo.seed,
        )
        .ok_or_else(|| DiscoveryError::Invalid("empty scene".into()))?;
        let (cloud, channel, _) = interface_cloud(variant, &obs, target, cfg)
            .map_err(|e| DiscoveryError::Invalid(e.to_string()))?;
        out.push(SkillTriplet {
            label,
            target,
            object_cloud: cloud,
            channel,
            trajectory: demo.trajectory.slice(start, s.end - 1),
        });
    }
    Ok((segments, out))
}

pub struct Discovery {
    pub library: SkillLibrary,
    /// `(demo index, warning)`.
    pub warnings: Vec<(usize, Warning)>,
}

/// Segments, extracts and canonicalizes every demo. Demos are processed in
/// parallel and merged in input order.
pub fn discover(
    demos: &[Demo],
    variant: Variant,
    mode: AnchorMode,
    augment: usize,
    seed: u64,
    cfg: &DiscoveryConfig,
    sensing: &SensingConfig,
) -> Result<Discovery, DiscoveryError> {
    if demos.is_empty() {
        return Err(DiscoveryError::NoDemos);
    }
    type PerDemo = Result<(Vec<CanonicalSkill>, Vec<Warning>), DiscoveryError>;
    let per_demo: Vec<PerDemo> = demos
        .par_iter()
        .enumerate()
        .map(|(d, demo)| {
            let wrap = |e| DiscoveryError::InDemo {
                demo: d,
                error: Box::new(e),
            };
            let (segments, triplets) =
                extract_triplets(demo, variant, cfg, sensing).map_err(wrap)?;
            let warnings = flag_low_confidence(&segments, demo, cfg, sensing);
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, &[d as u64]));
            let skill_segments: Vec<usize> = segments
                .iter()
                .enumerate()
                .filter(|(_, s)| matches!(s.kind, SegmentKind::Skill { .. }))
                .map(|(k, _)| k)
                .collect();
            let mut entries = vec![];
            for (t, seg) in triplets.iter().zip(skill_segments) {
                let source = (d, seg);
                if !variant.canonicalizes() {
                    entries.push(canonicalize_with(t, Vec3::ZERO, source));
                } else if mode == AnchorMode::Random {
                    for _ in 0..augment.max(1) {
                        entries.push(canonicalize(t, mode, &mut rng, source));
                    }
                } else {
                    entries.push(canonicalize(t, mode, &mut rng, source));
                }
            }
            Ok((entries, warnings))
        })
        .collect();
    let mut entries = vec![];
    let mut warnings = vec![];
    for (d, r) in per_demo.into_iter().enumerate() {
        let (e, w) = r?;
        entries.extend(e);
        warnings.extend(w.into_iter().map(|w| (d, w)));
    }
    let meta = LibraryMeta {
        variant,
        anchor_mode: mode,
        augment,
        seed,
    };
    Ok(Discovery {
        library: SkillLibrary::new(meta, entries),
        warnings,
    })
}

pub fn build_library(
    demos: &[Demo],
    variant: Variant,
    mode: AnchorMode,
    augment: usize,
    seed: u64,
    cfg: &DiscoveryConfig,
    sensing: &SensingConfig,
) -> Result<SkillLibrary, DiscoveryError> {
    discover(demos, variant, mode, augment, seed, cfg, sensing).map(|d| d.library)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::UnitQuat;
    use crate::world::GripperState;

    fn triplet() -> SkillTriplet {
        let cloud =
            PointCloud::new(vec![Vec3::new(1.0, 1.0, 1.0), Vec3::new(3.0, 3.0, 3.0)]).unwrap();
        let traj = Trajectory::new(vec![
            GripperState::new(Vec3::new(2.0, 2.0, 2.5), UnitQuat::from_yaw(0.3), 1.0),
            GripperState::new(Vec3::new(2.0, 2.0, 2.1), UnitQuat::from_yaw(0.3), 0.0),
        ])
        .unwrap();
        SkillTriplet {
            label: SkillLabel::Pick,
            target: 1,
            object_cloud: cloud,
            channel: None,
            trajectory: traj,
        }
    }

    #[test]
    fn centroid_anchor_arithmetic() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let c = canonicalize(&triplet(), AnchorMode::Centroid, &mut rng, (0, 0));
        assert_eq!(c.anchor, Vec3::new(2.0, 2.0, 2.0));
        assert_eq!(
            c.cloud_c.points(),
            &[Vec3::new(-1.0, -1.0, -1.0), Vec3::new(1.0, 1.0, 1.0)]
        );
        assert_eq!(c.traj_c.steps()[0].orientation, UnitQuat::from_yaw(0.3));
        assert_eq!(c.traj_c.steps()[1].aperture, 0.0);
        assert_eq!(un_canonicalize(&c.traj_c, c.anchor), triplet().trajectory);
    }

    #[test]
    fn random_anchor_is_a_cloud_point() {
        let t = triplet();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let c = canonicalize(&t, AnchorMode::Random, &mut rng, (0, 0));
            assert!(t.object_cloud.points().contains(&c.anchor));
        }
    }

    #[test]
    fn zero_anchor_is_identity() {
        let t = triplet().trajectory;
        assert_eq!(un_canonicalize(&t, Vec3::ZERO), t);
    }

    #[test]
    fn skill_indices() {
        assert_eq!(SkillLabel::Press.index(), 0);
        assert_eq!(SkillLabel::Close.index(), 8);
        assert_eq!("pull_out".parse::<SkillLabel>(), Ok(SkillLabel::PullOut));
    }
}
