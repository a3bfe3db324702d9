//! `gsl`: demo generation, skill discovery, benchmarking and inspection.
//!
//! Exit codes: 0 success, 1 data or file error, 2 usage error.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gsl_core::demonstrations::{load_demos, save_demos};
use gsl_core::evaluation::{
    load_results, make_splits, run_ablation, run_benchmark_with, train_demos, write_report,
    BenchmarkConfig, ResultsMeta, Variant,
};
use gsl_core::executor::execute_task;
use gsl_core::skill_discovery::{discover, load_library, save_library, AnchorMode, SkillLabel};

#[derive(Parser)]
#[command(
    name = "gsl",
    version,
    about = "Object-centric skill learning and composition"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate expert demonstrations for the train families.
    GenDemos {
        /// Benchmark config; defaults to $GSL_CONFIG_DIR/benchmark.toml or the built-in one.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Segment demonstrations into a canonical skill library.
    Discover {
        #[arg(long)]
        demos: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "centroid")]
        anchor: AnchorMode,
        #[arg(long, default_value_t = 1)]
        augment: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Pipeline variant the library is built for.
        #[arg(long, default_value = "complete")]
        ablation: Variant,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Run the benchmark with one library and write report files.
    Eval {
        #[arg(long)]
        library: PathBuf,
        #[arg(long)]
        benchmark: Option<PathBuf>,
        #[arg(long, default_value = "complete")]
        ablation: Variant,
        #[arg(long)]
        rollouts: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Build and evaluate every ablation variant from one demo file.
    Ablate {
        #[arg(long)]
        demos: PathBuf,
        #[arg(long)]
        benchmark: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        rollouts: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "centroid")]
        anchor: AnchorMode,
        #[arg(long, default_value_t = 1)]
        augment: usize,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Print library statistics.
    Inspect {
        #[arg(long)]
        library: PathBuf,
        #[arg(long)]
        skill: Option<SkillLabel>,
    },
    /// Re-execute one recorded episode and print its step log.
    Replay {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        episode: usize,
    },
}

fn workers(w: Option<usize>) -> usize {
    w.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .max(1)
}

fn benchmark(path: Option<&Path>) -> Result<BenchmarkConfig, String> {
    if let Some(p) = path {
        return BenchmarkConfig::load(p).map_err(|e| e.to_string());
    }
    if let Some(dir) = std::env::var_os("GSL_CONFIG_DIR") {
        let p = Path::new(&dir).join("benchmark.toml");
        if p.exists() {
            return BenchmarkConfig::load(&p).map_err(|e| e.to_string());
        }
    }
    Ok(BenchmarkConfig::embedded())
}

fn run(cli: Cli) -> Result<(), String> {
    match cli.command {
        Command::GenDemos {
            config,
            out,
            seed,
            workers: w,
        } => {
            let cfg = benchmark(config.as_deref())?;
            let n = workers(w);
            let demos = gsl_core::evaluation::run_in_pool(n, || train_demos(&cfg, seed))
                .map_err(|e| e.to_string())?;
            save_demos(&out, &demos).map_err(|e| e.to_string())?;
            eprintln!("wrote {} demos to {}", demos.len(), out.display());
        }
        Command::Discover {
            demos,
            out,
            anchor,
            augment,
            seed,
            ablation,
            config,
            workers: w,
        } => {
            let cfg = benchmark(config.as_deref())?;
            let demos = load_demos(&demos, &cfg.exec.world).map_err(|e| e.to_string())?;
            let found = gsl_core::evaluation::run_in_pool(workers(w), || {
                discover(
                    &demos,
                    ablation,
                    anchor,
                    augment,
                    seed,
                    &cfg.exec.discovery,
                    &cfg.exec.sensing,
                )
                .map_err(Into::into)
            })
            .map_err(|e| e.to_string())?;
            for (d, w) in &found.warnings {
                eprintln!(
                    "warning: demo {d}, segment {}: {:?}: {}",
                    w.segment, w.kind, w.message
                );
            }
            save_library(&out, &found.library).map_err(|e| e.to_string())?;
            eprintln!("wrote {} skills to {}", found.library.len(), out.display());
        }
        Command::Eval {
            library,
            benchmark: bench,
            ablation,
            rollouts,
            seed,
            out,
            workers: w,
        } => {
            let mut cfg = benchmark(bench.as_deref())?;
            if let Some(r) = rollouts {
                cfg.rollouts = r;
            }
            let lib = load_library(&library).map_err(|e| e.to_string())?;
            let splits = make_splits(&cfg, seed).map_err(|e| e.to_string())?;
            let rows = run_benchmark_with(
                workers(w),
                &splits,
                &[(ablation, &lib)],
                &cfg.noise,
                &cfg.exec,
            )
            .map_err(|e| e.to_string())?;
            let meta = ResultsMeta {
                libraries: vec![(ablation, library.display().to_string())],
                noise: cfg.noise,
                exec: cfg.exec.clone(),
            };
            write_report(&out, &meta, &rows).map_err(|e| e.to_string())?;
            print!(
                "{}",
                std::fs::read_to_string(out.join("summary.txt")).map_err(|e| e.to_string())?
            );
        }
        Command::Ablate {
            demos,
            benchmark: bench,
            out,
            rollouts,
            seed,
            anchor,
            augment,
            workers: w,
        } => {
            let mut cfg = benchmark(bench.as_deref())?;
            if let Some(r) = rollouts {
                cfg.rollouts = r;
            }
            let demos = load_demos(&demos, &cfg.exec.world).map_err(|e| e.to_string())?;
            let splits = make_splits(&cfg, seed).map_err(|e| e.to_string())?;
            let (libs, rows) = run_ablation(
                &demos,
                Variant::ALL,
                &splits,
                anchor,
                augment,
                seed,
                &cfg.noise,
                &cfg.exec,
                workers(w),
            )
            .map_err(|e| e.to_string())?;
            std::fs::create_dir_all(&out).map_err(|e| format!("{}: {e}", out.display()))?;
            let mut libraries = vec![];
            for (v, lib) in Variant::ALL.iter().zip(&libs) {
                let p = out.join(format!("library_{v}.jsonl"));
                save_library(&p, lib).map_err(|e| e.to_string())?;
                libraries.push((*v, p.display().to_string()));
            }
            let meta = ResultsMeta {
                libraries,
                noise: cfg.noise,
                exec: cfg.exec.clone(),
            };
            write_report(&out, &meta, &rows).map_err(|e| e.to_string())?;
            print!(
                "{}",
                std::fs::read_to_string(out.join("summary.txt")).map_err(|e| e.to_string())?
            );
        }
        Command::Inspect { library, skill } => {
            let lib = load_library(&library).map_err(|e| e.to_string())?;
            println!(
                "variant {}  anchor {}  augment {}  seed {}  entries {}",
                lib.meta.variant,
                lib.meta.anchor_mode,
                lib.meta.augment,
                lib.meta.seed,
                lib.len()
            );
            let mut by_label: BTreeMap<SkillLabel, Vec<(usize, usize)>> = BTreeMap::new();
            for e in lib.entries() {
                if skill.is_none_or(|k| k == e.label) {
                    by_label
                        .entry(e.label)
                        .or_default()
                        .push((e.cloud_c.len(), e.traj_c.len()));
                }
            }
            println!(
                "{:<10} {:>7} {:>21} {:>21}",
                "skill", "entries", "cloud min/mean/max", "steps min/mean/max"
            );
            for (k, v) in by_label {
                let stat = |f: &dyn Fn(&(usize, usize)) -> usize| {
                    let xs: Vec<usize> = v.iter().map(f).collect();
                    let mean = xs.iter().sum::<usize>() as f64 / xs.len() as f64;
                    format!(
                        "{}/{:.1}/{}",
                        xs.iter().min().unwrap_or(&0),
                        mean,
                        xs.iter().max().unwrap_or(&0)
                    )
                };
                println!(
                    "{:<10} {:>7} {:>21} {:>21}",
                    k.token(),
                    v.len(),
                    stat(&|e| e.0),
                    stat(&|e| e.1)
                );
            }
        }
        Command::Replay { results, episode } => {
            let (meta, rows) = load_results(&results).map_err(|e| e.to_string())?;
            let row = rows.get(episode).ok_or_else(|| {
                format!(
                    "{}: episode {episode} out of range ({} rows)",
                    results.display(),
                    rows.len()
                )
            })?;
            let path = meta
                .libraries
                .iter()
                .find(|(v, _)| *v == row.variant)
                .map(|(_, p)| p.clone())
                .ok_or_else(|| format!("no library recorded for `{}`", row.variant))?;
            let lib = load_library(Path::new(&path)).map_err(|e| e.to_string())?;
            let r = execute_task(
                &row.task,
                &lib,
                row.variant,
                &meta.noise,
                row.seed,
                &meta.exec,
            );
            println!(
                "episode {episode}: {} {} rollout {} seed {}",
                row.variant, row.task_id, row.rollout, row.seed
            );
            println!("description: {}", row.task.description);
            for (i, s) in r.log.iter().enumerate() {
                println!(
                    "step {i}: {}({}) entry {} chamfer {:.6} anchor [{:.4}, {:.4}, {:.4}]",
                    s.skill, s.target, s.entry, s.chamfer, s.anchor.x, s.anchor.y, s.anchor.z
                );
            }
            match &r.error {
                Some(e) => println!("stopped: {e}"),
                None => println!(
                    "finished {} steps, {} states",
                    r.steps_executed,
                    r.trajectory.len()
                ),
            }
            println!("success: {}", r.success);
            if r.success != row.success || r.log != row.log {
                return Err("replay disagrees with the recorded episode".into());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
