//! Benchmark configuration and split construction.
//!
//! Train tasks are the listed families sampled inside `train_region`. Test
//! tasks each name a family and one axis of variation: a placement region
//! outside the train region (`spatial`), a scale range and recolouring
//! (`appearance`), extra objects (`distractor`), or a skill-object sequence
//! absent from the train descriptions (`compositional`).

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Deserialize;

use super::{io_error, EvalError, SplitKind};
use crate::demonstrations::{generate_demo, Demo, DemoSettings, ExpertConfig};
use crate::executor::ExecConfig;
use crate::high_level_planner::parse_task;
use crate::mix_seed;
use crate::sensing::SensorNoise;
use crate::world::family::{FamilySpec, Placement, Region, SceneDefaults};
use crate::world::{Color, TaskInstance};

pub const EMBEDDED_BENCHMARK: &str = include_str!("../../config/benchmark.toml");

const EMBEDDED_FAMILIES: &[(&str, &str)] = &[
    (
        "press_button",
        include_str!("../../config/families/press_button.toml"),
    ),
    (
        "lift_block",
        include_str!("../../config/families/lift_block.toml"),
    ),
    (
        "pick_place",
        include_str!("../../config/families/pick_place.toml"),
    ),
    (
        "pull_drawer",
        include_str!("../../config/families/pull_drawer.toml"),
    ),
    (
        "push_drawer",
        include_str!("../../config/families/push_drawer.toml"),
    ),
    (
        "screw_lid",
        include_str!("../../config/families/screw_lid.toml"),
    ),
    (
        "two_buttons",
        include_str!("../../config/families/two_buttons.toml"),
    ),
    (
        "drawer_block",
        include_str!("../../config/families/drawer_block.toml"),
    ),
    (
        "lid_jar_button",
        include_str!("../../config/families/lid_jar_button.toml"),
    ),
];

/// A built-in family.
pub fn family_by_name(name: &str) -> Option<FamilySpec> {
    EMBEDDED_FAMILIES
        .iter()
        .find(|(n, _)| *n == name)
        .and_then(|(_, text)| FamilySpec::from_toml(text).ok())
}

/// Attempts per train demo before giving up on a family.
const DEMO_ATTEMPTS: u64 = 20;

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestTask {
    pub id: String,
    pub split: SplitKind,
    pub family: String,
    #[serde(default)]
    pub region: Option<Region>,
    #[serde(default)]
    pub scale: Option<[f64; 2]>,
    #[serde(default)]
    pub recolor: Vec<(usize, Color)>,
    #[serde(default)]
    pub distractors: usize,
}

fn default_demos() -> usize {
    3
}

fn default_rollouts() -> usize {
    20
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub seed: u64,
    #[serde(default = "default_demos")]
    pub demos_per_family: usize,
    #[serde(default = "default_rollouts")]
    pub rollouts: usize,
    pub train: Vec<String>,
    pub train_region: Region,
    #[serde(default)]
    pub noise: SensorNoise,
    #[serde(default)]
    pub scene: SceneDefaults,
    #[serde(default)]
    pub exec: ExecConfig,
    #[serde(default)]
    pub expert: ExpertConfig,
    #[serde(default, rename = "test")]
    pub tests: Vec<TestTask>,
    #[serde(skip)]
    pub families: BTreeMap<String, FamilySpec>,
}

/// One episode to run: the sampled task and its seed.
#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub task_id: String,
    pub task: TaskInstance,
    pub seed: u64,
    pub rollout: usize,
    /// Size of the perturbation along the split's axis.
    pub magnitude: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub kind: SplitKind,
    pub episodes: Vec<Episode>,
}

impl BenchmarkConfig {
    /// Parses a config; family files are looked up in `dir/families` first.
    pub fn from_toml(text: &str, dir: Option<&Path>) -> Result<BenchmarkConfig, EvalError> {
        let mut cfg: BenchmarkConfig =
            toml::from_str(text).map_err(|e| EvalError::Config(e.to_string()))?;
        let names: BTreeSet<String> = cfg
            .train
            .iter()
            .cloned()
            .chain(cfg.tests.iter().map(|t| t.family.clone()))
            .collect();
        for name in names {
            let spec = match dir.map(|d| d.join("families").join(format!("{name}.toml"))) {
                Some(p) if p.exists() => {
                    let text = std::fs::read_to_string(&p).map_err(io_error(&p))?;
                    FamilySpec::from_toml(&text)?
                }
                _ => family_by_name(&name)
                    .ok_or_else(|| EvalError::Config(format!("unknown family `{name}`")))?,
            };
            if spec.name != name {
                return Err(EvalError::Config(format!(
                    "family file for `{name}` declares name `{}`",
                    spec.name
                )));
            }
            cfg.families.insert(name, spec);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<BenchmarkConfig, EvalError> {
        let text = std::fs::read_to_string(path).map_err(io_error(path))?;
        let dir: Option<PathBuf> = path.parent().map(Path::to_path_buf);
        BenchmarkConfig::from_toml(&text, dir.as_deref())
    }

    pub fn embedded() -> BenchmarkConfig {
        BenchmarkConfig::from_toml(EMBEDDED_BENCHMARK, None).expect("built-in benchmark is valid")
    }

    pub fn demo_settings(&self) -> DemoSettings {
        DemoSettings {
            world: self.exec.world.clone(),
            motion: self.exec.motion.clone(),
            expert: self.expert.clone(),
            sensing: self.exec.sensing.clone(),
        }
    }

    fn family(&self, name: &str) -> &FamilySpec {
        &self.families[name]
    }

    pub fn train_descriptions(&self) -> BTreeSet<String> {
        self.train
            .iter()
            .map(|n| self.family(n).nominal_description())
            .collect()
    }

    fn validate(&self) -> Result<(), EvalError> {
        let bad = |m: String| Err(EvalError::Config(m));
        if self.train.is_empty() {
            return bad("no train families".into());
        }
        if self.demos_per_family == 0 {
            return bad("demos_per_family must be positive".into());
        }
        let r = self.train_region;
        if !(r.x[0] <= r.x[1] && r.y[0] <= r.y[1]) {
            return bad("train_region is empty".into());
        }
        if !self.noise.is_valid() {
            return bad("noise parameters out of range".into());
        }
        let train_desc = self.train_descriptions();
        let mut ids = BTreeSet::new();
        for t in &self.tests {
            if !ids.insert(t.id.as_str()) || self.train.contains(&t.id) {
                return bad(format!("task id `{}` is not unique", t.id));
            }
            let fam = self.family(&t.family);
            match t.split {
                SplitKind::Train => return bad(format!("test `{}` uses the train split", t.id)),
                SplitKind::Spatial => {
                    let Some(region) = t.region else {
                        return bad(format!("spatial test `{}` needs a region", t.id));
                    };
                    if region.intersects(&self.train_region) {
                        return bad(format!(
                            "spatial test `{}` overlaps the train placements",
                            t.id
                        ));
                    }
                }
                SplitKind::Appearance => {
                    let ok_scale = t.scale.is_some_and(|[a, b]| {
                        a >= 0.8 - 1e-12 && b <= 1.2 + 1e-12 && a <= b && a > 0.0
                    });
                    if !ok_scale || t.recolor.is_empty() {
                        return bad(format!(
                            "appearance test `{}` needs a scale within [0.8, 1.2] and a recolouring",
                            t.id
                        ));
                    }
                    let desc = fam.description_with(&t.recolor)?;
                    if train_desc.contains(&desc) {
                        return bad(format!(
                            "appearance test `{}` keeps the train colours",
                            t.id
                        ));
                    }
                }
                SplitKind::Distractor => {
                    if t.distractors < 2 {
                        return bad(format!(
                            "distractor test `{}` needs at least 2 distractors",
                            t.id
                        ));
                    }
                }
                SplitKind::Compositional => {
                    let desc = fam.description_with(&t.recolor)?;
                    if train_desc.contains(&desc) {
                        return bad(format!(
                            "compositional test `{}` repeats a train description",
                            t.id
                        ));
                    }
                }
            }
            if t.split != SplitKind::Spatial
                && t.region.is_some_and(|g| !g.intersects(&self.train_region))
            {
                return bad(format!(
                    "test `{}` moves placements outside the train region",
                    t.id
                ));
            }
        }
        Ok(())
    }

    fn placement(&self, t: &TestTask) -> Placement {
        Placement {
            region: t.region.unwrap_or(self.train_region),
            scale: t.scale,
            recolor: t.recolor.clone(),
            distractors: t.distractors,
        }
    }
}

/// Samples every episode of every split. Deterministic in `seed`; the split
/// invariants are checked again on the sampled tasks.
pub fn make_splits(cfg: &BenchmarkConfig, seed: u64) -> Result<Vec<Split>, EvalError> {
    let mut splits = vec![];
    let train_desc = cfg.train_descriptions();
    for (k, kind) in SplitKind::ALL.iter().enumerate() {
        let mut episodes = vec![];
        let jobs: Vec<(usize, String, &FamilySpec, Placement)> = if *kind == SplitKind::Train {
            cfg.train
                .iter()
                .enumerate()
                .map(|(i, n)| {
                    (
                        i,
                        n.clone(),
                        cfg.family(n),
                        Placement::in_region(cfg.train_region),
                    )
                })
                .collect()
        } else {
            cfg.tests
                .iter()
                .enumerate()
                .filter(|(_, t)| t.split == *kind)
                .map(|(i, t)| (i, t.id.clone(), cfg.family(&t.family), cfg.placement(t)))
                .collect()
        };
        for (i, id, fam, placement) in jobs {
            for r in 0..cfg.rollouts {
                let s = mix_seed(seed, &[k as u64, i as u64, r as u64]);
                let sampled = fam.sample(&placement, &cfg.scene, &id, s)?;
                let (x, y) = (sampled.anchor.x, sampled.anchor.y);
                let outside = cfg.train_region.distance_outside(x, y);
                let steps = parse_task(&sampled.task.description).map_or(0, |p| p.len());
                let magnitude = match kind {
                    SplitKind::Train => 0.0,
                    SplitKind::Spatial => outside,
                    SplitKind::Appearance => (sampled.scale - 1.0).abs(),
                    SplitKind::Distractor => placement.distractors as f64,
                    SplitKind::Compositional => steps as f64,
                };
                let leak = match kind {
                    SplitKind::Train => !cfg.train_region.contains(x, y),
                    SplitKind::Spatial => outside <= 0.0,
                    SplitKind::Compositional | SplitKind::Appearance => {
                        train_desc.contains(&sampled.task.description)
                    }
                    SplitKind::Distractor => {
                        sampled.task.scene.objects.len() < fam.objects.len() + 2
                    }
                };
                if leak {
                    return Err(EvalError::Config(format!(
                        "{kind} task `{id}` rollout {r} violates its split"
                    )));
                }
                episodes.push(Episode {
                    task_id: id.clone(),
                    task: sampled.task,
                    seed: s,
                    rollout: r,
                    magnitude,
                });
            }
        }
        splits.push(Split {
            kind: *kind,
            episodes,
        });
    }
    Ok(splits)
}

/// Expert demos for every train family, placed in the train region. A seed
/// whose script fails is replaced by the next one in a fixed sequence.
pub fn train_demos(cfg: &BenchmarkConfig, seed: u64) -> Result<Vec<Demo>, EvalError> {
    let settings = cfg.demo_settings();
    let jobs: Vec<(usize, usize)> = (0..cfg.train.len())
        .flat_map(|f| (0..cfg.demos_per_family).map(move |k| (f, k)))
        .collect();
    let placement = Placement::in_region(cfg.train_region);
    jobs.par_iter()
        .map(|&(f, k)| {
            let name = &cfg.train[f];
            let fam = cfg.family(name);
            let mut last = None;
            for attempt in 0..DEMO_ATTEMPTS {
                let s = mix_seed(seed, &[f as u64, k as u64, attempt]);
                let sampled = fam.sample(&placement, &cfg.scene, name, s)?;
                match generate_demo(&sampled.task, s, &settings) {
                    Ok(d) => return Ok(d),
                    Err(e) => last = Some(e),
                }
            }
            Err(EvalError::Demo(last.expect("at least one attempt")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embedded_config_is_valid() {
        let cfg = BenchmarkConfig::embedded();
        assert_eq!(cfg.train.len(), 6);
        assert_eq!(cfg.tests.len(), 12);
        assert_eq!(cfg.train.len() * cfg.demos_per_family, 18);
    }

    #[test]
    fn spatial_region_inside_train_is_rejected() {
        let text = EMBEDDED_BENCHMARK.replace("x = [0.22, 0.34]", "x = [0.05, 0.34]");
        assert!(matches!(
            BenchmarkConfig::from_toml(&text, None),
            Err(EvalError::Config(m)) if m.contains("overlaps")
        ));
    }

    #[test]
    fn compositional_descriptions_are_new() {
        let cfg = BenchmarkConfig::embedded();
        let splits = make_splits(
            &BenchmarkConfig {
                rollouts: 2,
                ..cfg.clone()
            },
            1,
        )
        .unwrap();
        let train: BTreeSet<String> = splits[0]
            .episodes
            .iter()
            .map(|e| e.task.description.clone())
            .collect();
        let comp = splits
            .iter()
            .find(|s| s.kind == SplitKind::Compositional)
            .unwrap();
        assert_eq!(comp.episodes.len(), 6);
        for e in &comp.episodes {
            assert!(!train.contains(&e.task.description));
        }
    }

    #[test]
    fn splits_are_deterministic() {
        let cfg = BenchmarkConfig {
            rollouts: 2,
            ..BenchmarkConfig::embedded()
        };
        assert_eq!(make_splits(&cfg, 3).unwrap(), make_splits(&cfg, 3).unwrap());
    }
}
