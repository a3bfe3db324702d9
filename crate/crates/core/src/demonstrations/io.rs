//! Demo files: a `gsl-demos v1` header line followed by one JSON record per
//! demonstration. Record fields, in order:
//!
//! | field         | content                                                  |
//! |---------------|----------------------------------------------------------|
//! | `task_id`     | task family / variant name                               |
//! | `description` | structured task string                                   |
//! | `seed`        | generation seed                                          |
//! | `success`     | success predicate                                        |
//! | `scene`       | initial scene                                            |
//! | `trajectory`  | list of `[x, y, z, qw, qx, qy, qz, c]`                   |
//! | `keyframes`   | keyframe step indices                                    |
//! | `keyposes`    | per keyframe, `[instance_id, pose]` for every object     |
//!
//! Floats are written in shortest round-trip form, so loading reproduces
//! every value bit for bit. Frames are rebuilt on load by replaying the
//! trajectory and must agree with the stored keyposes.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Demo, DemoError, Keyframes};
use crate::geometry::RigidTransform;
use crate::world::{InstanceId, Scene, SuccessPredicate, TaskInstance, Trajectory, WorldConfig};

pub const DEMO_HEADER: &str = "gsl-demos v1";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DemoRecord {
    task_id: String,
    description: String,
    seed: u64,
    success: SuccessPredicate,
    scene: Scene,
    trajectory: Trajectory,
    keyframes: Keyframes,
    keyposes: Vec<Vec<(InstanceId, RigidTransform)>>,
}

fn keyposes(demo: &Demo) -> Vec<Vec<(InstanceId, RigidTransform)>> {
    demo.keyframes
        .indices
        .iter()
        .map(|&i| {
            demo.frames[i]
                .objects
                .iter()
                .map(|o| (o.instance_id, o.pose))
                .collect()
        })
        .collect()
}

pub fn write_demos<W: Write>(mut w: W, demos: &[Demo]) -> std::io::Result<()> {
    writeln!(w, "{DEMO_HEADER}")?;
    for d in demos {
        let rec = DemoRecord {
            task_id: d.task.task_id.clone(),
            description: d.task.description.clone(),
            seed: d.seed,
            success: d.task.success.clone(),
            scene: d.task.scene.clone(),
            trajectory: d.trajectory.clone(),
            keyframes: d.keyframes.clone(),
            keyposes: keyposes(d),
        };
        serde_json::to_writer(&mut w, &rec)?;
        writeln!(w)?;
    }
    w.flush()
}

pub fn read_demos<R: Read>(r: R, world: &WorldConfig) -> Result<Vec<Demo>, DemoError> {
    let perr = |line: usize, message: String| DemoError::Parse { line, message };
    let mut lines = BufReader::new(r).lines();
    match lines.next() {
        Some(Ok(h)) if h.trim_end() == DEMO_HEADER => {}
        Some(Ok(h)) => {
            return Err(perr(
                1,
                format!("expected header `{DEMO_HEADER}`, found `{h}`"),
            ))
        }
        Some(Err(e)) => return Err(perr(1, e.to_string())),
        None => return Err(perr(1, "missing header".into())),
    }
    let mut demos = vec![];
    for (k, line) in lines.enumerate() {
        let n = k + 2;
        let line = line.map_err(|e| perr(n, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: DemoRecord = serde_json::from_str(&line).map_err(|e| perr(n, e.to_string()))?;
        let task = TaskInstance {
            task_id: rec.task_id,
            description: rec.description,
            scene: rec.scene,
            success: rec.success,
        };
        let demo = Demo::replay(task, rec.seed, rec.trajectory, world)
            .map_err(|e| perr(n, format!("replay: {e}")))?;
        if demo.keyframes != rec.keyframes {
            return Err(perr(n, "keyframes disagree with the trajectory".into()));
        }
        if keyposes(&demo) != rec.keyposes {
            return Err(perr(
                n,
                "keyposes disagree with the replayed trajectory".into(),
            ));
        }
        demos.push(demo);
    }
    Ok(demos)
}

pub fn save_demos(path: &Path, demos: &[Demo]) -> Result<(), DemoError> {
    let io = |e: std::io::Error| DemoError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let f = File::create(path).map_err(io)?;
    write_demos(BufWriter::new(f), demos).map_err(io)
}

pub fn load_demos(path: &Path, world: &WorldConfig) -> Result<Vec<Demo>, DemoError> {
    let f = File::open(path).map_err(|e| DemoError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    read_demos(f, world)
}
