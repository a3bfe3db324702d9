//! Parallel episode execution and the results file.
//!
//! Results files hold a `gsl-results v1` header, one JSON meta line (the
//! library used per variant, sensor noise and executor settings) and one
//! JSON row per episode: `variant`, `split`, `task_id`, `rollout`, `seed`,
//! `magnitude`, `success`, `steps_executed`, `error` (tagged by `kind`),
//! `log` (per step: `skill`, `target`, `chamfer`, `entry`, `anchor`) and
//! the sampled `task`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{io_error, EvalError, Split, SplitKind, Variant};
use crate::executor::{execute_task, EpisodeError, ExecConfig, StepLog};
use crate::sensing::SensorNoise;
use crate::skill_discovery::SkillLibrary;
use crate::world::TaskInstance;

pub const RESULTS_HEADER: &str = "gsl-results v1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeRow {
    pub variant: Variant,
    pub split: SplitKind,
    pub task_id: String,
    pub rollout: usize,
    pub seed: u64,
    pub magnitude: f64,
    pub success: bool,
    pub steps_executed: usize,
    pub error: Option<EpisodeError>,
    pub log: Vec<StepLog>,
    pub task: TaskInstance,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultsMeta {
    /// Library file per variant, as given on the command line.
    pub libraries: Vec<(Variant, String)>,
    pub noise: SensorNoise,
    pub exec: ExecConfig,
}

/// Runs every episode of `splits` for each `(variant, library)` pair on the
/// current rayon pool. Rows come back in input order.
pub fn run_benchmark(
    splits: &[Split],
    libs: &[(Variant, &SkillLibrary)],
    noise: &SensorNoise,
    exec: &ExecConfig,
) -> Result<Vec<EpisodeRow>, EvalError> {
    for (v, lib) in libs {
        if lib.meta.variant != *v {
            return Err(EvalError::LibraryMismatch {
                expected: *v,
                found: lib.meta.variant,
            });
        }
    }
    let jobs: Vec<(Variant, &SkillLibrary, SplitKind, &super::Episode)> = libs
        .iter()
        .flat_map(|(v, lib)| {
            splits
                .iter()
                .flat_map(move |s| s.episodes.iter().map(move |e| (*v, *lib, s.kind, e)))
        })
        .collect();
    Ok(jobs
        .par_iter()
        .map(|&(variant, lib, split, e)| {
            let r = execute_task(&e.task, lib, variant, noise, e.seed, exec);
            EpisodeRow {
                variant,
                split,
                task_id: e.task_id.clone(),
                rollout: e.rollout,
                seed: e.seed,
                magnitude: e.magnitude,
                success: r.success,
                steps_executed: r.steps_executed,
                error: r.error,
                log: r.log,
                task: e.task.clone(),
            }
        })
        .collect())
}

/// Runs `f` on a dedicated rayon pool of `workers` threads.
pub fn run_in_pool<T: Send>(
    workers: usize,
    f: impl FnOnce() -> Result<T, EvalError> + Send,
) -> Result<T, EvalError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| EvalError::Config(e.to_string()))?
        .install(f)
}

/// [`run_benchmark`] on a dedicated pool of `workers` threads.
pub fn run_benchmark_with(
    workers: usize,
    splits: &[Split],
    libs: &[(Variant, &SkillLibrary)],
    noise: &SensorNoise,
    exec: &ExecConfig,
) -> Result<Vec<EpisodeRow>, EvalError> {
    run_in_pool(workers, || run_benchmark(splits, libs, noise, exec))
}

pub fn write_results<W: Write>(
    mut w: W,
    meta: &ResultsMeta,
    rows: &[EpisodeRow],
) -> std::io::Result<()> {
    writeln!(w, "{RESULTS_HEADER}")?;
    serde_json::to_writer(&mut w, meta)?;
    writeln!(w)?;
    for r in rows {
        serde_json::to_writer(&mut w, r)?;
        writeln!(w)?;
    }
    w.flush()
}

pub fn read_results<R: Read>(r: R) -> Result<(ResultsMeta, Vec<EpisodeRow>), EvalError> {
    let perr = |line: usize, message: String| EvalError::Parse { line, message };
    let mut lines = BufReader::new(r).lines();
    match lines.next() {
        Some(Ok(h)) if h.trim_end() == RESULTS_HEADER => {}
        Some(Ok(h)) => {
            return Err(perr(
                1,
                format!("expected header `{RESULTS_HEADER}`, found `{h}`"),
            ))
        }
        Some(Err(e)) => return Err(perr(1, e.to_string())),
        None => return Err(perr(1, "missing header".into())),
    }
    let meta: ResultsMeta = match lines.next() {
        Some(Ok(l)) => serde_json::from_str(&l).map_err(|e| perr(2, e.to_string()))?,
        Some(Err(e)) => return Err(perr(2, e.to_string())),
        None => return Err(perr(2, "missing meta line".into())),
    };
    let mut rows = vec![];
    for (k, line) in lines.enumerate() {
        let line = line.map_err(|e| perr(k + 3, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        rows.push(serde_json::from_str(&line).map_err(|e| perr(k + 3, e.to_string()))?);
    }
    Ok((meta, rows))
}

pub fn save_results(path: &Path, meta: &ResultsMeta, rows: &[EpisodeRow]) -> Result<(), EvalError> {
    let f = File::create(path).map_err(io_error(path))?;
    write_results(BufWriter::new(f), meta, rows).map_err(io_error(path))
}

pub fn load_results(path: &Path) -> Result<(ResultsMeta, Vec<EpisodeRow>), EvalError> {
    let f = File::open(path).map_err(io_error(path))?;
    read_results(f)
}

/// Builds one library per variant from `demos` and runs every variant on the
/// splits, all on a pool of `workers` threads.
#[allow(clippy::too_many_arguments)]
pub fn run_ablation(
    demos: &[crate::demonstrations::Demo],
    variants: &[Variant],
    splits: &[Split],
    mode: crate::skill_discovery::AnchorMode,
    augment: usize,
    seed: u64,
    noise: &SensorNoise,
    exec: &ExecConfig,
    workers: usize,
) -> Result<(Vec<SkillLibrary>, Vec<EpisodeRow>), EvalError> {
    run_in_pool(workers, || {
        let mut libs = vec![];
        for v in variants {
            libs.push(crate::skill_discovery::build_library(
                demos,
                *v,
                mode,
                augment,
                seed,
                &exec.discovery,
                &exec.sensing,
            )?);
        }
        let pairs: Vec<(Variant, &SkillLibrary)> =
            variants.iter().copied().zip(libs.iter()).collect();
        let rows = run_benchmark(splits, &pairs, noise, exec)?;
        Ok((libs, rows))
    })
}
