//! Event-based segmentation of a dense demonstration into approach and
//! skill intervals, guided by the demo's own plan.

use serde::{Deserialize, Serialize};

use super::{DiscoveryConfig, DiscoveryError, SkillLabel};
use crate::demonstrations::Demo;
use crate::geometry::Vec3;
use crate::high_level_planner::{ground_object, SkillPlan};
use crate::sensing::{object_surface, observe, SensingConfig, SensorNoise};
use crate::world::{InstanceId, Scene};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SegmentKind {
    Approach,
    Skill {
        label: SkillLabel,
        target: InstanceId,
    },
}

/// Half-open step interval `[start, end)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub kind: SegmentKind,
    pub start: usize,
    pub end: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Event {
    Attach(InstanceId),
    Detach(InstanceId),
    SaturateHigh(InstanceId),
    SaturateLow(InstanceId),
}

const SAT: f64 = 1e-9;

/// Events caused by executing step `i`, for every step.
pub fn event_log(demo: &Demo) -> Vec<(usize, Event)> {
    let mut out = vec![];
    let mut prev = &demo.task.scene;
    for (i, cur) in demo.frames.iter().enumerate() {
        events_between(prev, cur, |e| out.push((i, e)));
        prev = cur;
    }
    out
}

fn events_between(a: &Scene, b: &Scene, mut emit: impl FnMut(Event)) {
    if a.attached_id() != b.attached_id() {
        if let Some(id) = a.attached_id() {
            emit(Event::Detach(id));
        }
        if let Some(id) = b.attached_id() {
            emit(Event::Attach(id));
        }
    }
    for o in &b.objects {
        let Some(before) = a.object(o.instance_id) else {
            continue;
        };
        let (v0, v1) = (before.articulation_value, o.articulation_value);
        if v0 < 1.0 - SAT && v1 >= 1.0 - SAT {
            emit(Event::SaturateHigh(o.instance_id));
        }
        if v0 > SAT && v1 <= SAT {
            emit(Event::SaturateLow(o.instance_id));
        }
    }
}

/// Distance from the gripper at step `i` to the target's surface samples.
pub(crate) fn gripper_distance(
    demo: &Demo,
    i: usize,
    target: InstanceId,
    sensing: &SensingConfig,
) -> Option<f64> {
    let scene = &demo.frames[i];
    let o = scene.object(target)?;
    let g = demo.trajectory.steps()[i].position;
    Some(
        object_surface(o, sensing.points_per_object)
            .into_iter()
            .map(|p: Vec3| p.distance(g))
            .fold(f64::INFINITY, f64::min),
    )
}

fn completion(
    demo: &Demo,
    log: &[(usize, Event)],
    label: SkillLabel,
    target: InstanceId,
    start: usize,
    cfg: &DiscoveryConfig,
) -> Option<usize> {
    let after = |pred: &dyn Fn(&Event) -> bool, from: usize| {
        log.iter()
            .find(|(i, e)| *i >= from && pred(e))
            .map(|(i, _)| *i)
    };
    match label {
        SkillLabel::Press | SkillLabel::PullOut | SkillLabel::Open => {
            after(&|e| *e == Event::SaturateHigh(target), start)
        }
        SkillLabel::PushBack | SkillLabel::Close => {
            after(&|e| *e == Event::SaturateLow(target), start)
        }
        SkillLabel::Pick => after(&|e| *e == Event::Attach(target), start),
        SkillLabel::Place => after(&|e| matches!(e, Event::Detach(_)), start),
        SkillLabel::Screw => {
            let sat = after(&|e| *e == Event::SaturateHigh(target), start)?;
            after(&|e| matches!(e, Event::Detach(_)), sat)
        }
        SkillLabel::Lift => {
            let z0 = demo.frames[start].object(target)?.center().z;
            (start..demo.frames.len()).find(|&i| {
                demo.frames[i]
                    .object(target)
                    .is_some_and(|o| o.center().z >= z0 + cfg.lift_height)
            })
        }
    }
}

/// Grounded targets of `plan`, each resolved at the step where the
/// previous skill ended.
pub fn segment_demo(
    demo: &Demo,
    plan: &SkillPlan,
    cfg: &DiscoveryConfig,
    sensing: &SensingConfig,
) -> Result<Vec<Segment>, DiscoveryError> {
    let m = demo.trajectory.len();
    let log = event_log(demo);
    let mut out = vec![];
    let mut cursor = 0;
    for (label, query) in &plan.steps {
        let no_interaction = || DiscoveryError::NoInteraction {
            step_count: m,
            object: query.to_string(),
        };
        if cursor >= m {
            return Err(no_interaction());
        }
        let scene = &demo.frames[cursor];
        let cloud = observe(scene, &SensorNoise::default(), sensing, demo.seed)
            .ok_or_else(no_interaction)?;
        let target = ground_object(query, &cloud, scene).map_err(|_| no_interaction())?;
        let start = (cursor..m)
            .find(|&i| gripper_distance(demo, i, target, sensing).is_some_and(|d| d <= cfg.d_near))
            .ok_or_else(no_interaction)?;
        let end = completion(demo, &log, *label, target, start, cfg).ok_or(
            DiscoveryError::IncompleteSkill {
                label: *label,
                object: query.to_string(),
            },
        )?;
        if start > cursor {
            out.push(Segment {
                kind: SegmentKind::Approach,
                start: cursor,
                end: start,
            });
        }
        out.push(Segment {
            kind: SegmentKind::Skill {
                label: *label,
                target,
            },
            start,
            end: end + 1,
        });
        cursor = end + 1;
    }
    if cursor < m {
        out.push(Segment {
            kind: SegmentKind::Approach,
            start: cursor,
            end: m,
        });
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WarningKind {
    /// Skill segment shorter than three steps.
    Short,
    /// The gripper never comes within half the interaction radius.
    Distant,
    /// Another event lies within two steps of the completion event.
    Ambiguous,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Warning {
    pub kind: WarningKind,
    pub segment: usize,
    pub message: String,
}

/// Rule check over precomputed per-segment facts: `closest[k]` is the
/// closest gripper-target distance within segment `k` (skill segments only).
pub fn flag_segments(
    segments: &[Segment],
    log: &[(usize, Event)],
    closest: &[Option<f64>],
    d_near: f64,
) -> Vec<Warning> {
    let mut out = vec![];
    for (k, s) in segments.iter().enumerate() {
        let SegmentKind::Skill { label, target } = s.kind else {
            continue;
        };
        if s.len() < 3 {
            out.push(Warning {
                kind: WarningKind::Short,
                segment: k,
                message: format!("{label} on {target} spans {} steps", s.len()),
            });
        }
        if let Some(d) = closest.get(k).copied().flatten() {
            if d > d_near / 2.0 {
                out.push(Warning {
                    kind: WarningKind::Distant,
                    segment: k,
                    message: format!("{label} on {target}: closest approach {d:.4} m"),
                });
            }
        }
        let done = s.end - 1;
        let events_at_done = log.iter().filter(|(i, _)| *i == done).count();
        let near = log
            .iter()
            .filter(|(i, _)| *i != done && i.abs_diff(done) <= 2)
            .count();
        if near > 0 || events_at_done > 1 {
            out.push(Warning {
                kind: WarningKind::Ambiguous,
                segment: k,
                message: format!("{label} on {target}: several events around step {done}"),
            });
        }
    }
    out
}

pub fn flag_low_confidence(
    segments: &[Segment],
    demo: &Demo,
    cfg: &DiscoveryConfig,
    sensing: &SensingConfig,
) -> Vec<Warning> {
    let log = event_log(demo);
    let closest: Vec<Option<f64>> = segments
        .iter()
        .map(|s| match s.kind {
            SegmentKind::Skill { target, .. } => (s.start..s.end)
                .filter_map(|i| gripper_distance(demo, i, target, sensing))
                .reduce(f64::min),
            SegmentKind::Approach => None,
        })
        .collect();
    flag_segments(segments, &log, &closest, cfg.d_near)
}
