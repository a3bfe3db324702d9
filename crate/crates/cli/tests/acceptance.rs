//! Acceptance suite. Prints one pass/fail line per criterion and exits
//! nonzero if any criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use gsl_core::demonstrations::{extract_keyframes, KeyframeConfig};
use gsl_core::evaluation::{
    make_splits, run_ablation, run_benchmark, summarize, train_demos, BenchmarkConfig, EpisodeRow,
    SplitKind, Variant,
};
use gsl_core::executor::{execute_task, ExecConfig};
use gsl_core::geometry::{apply_transform, PointCloud, RigidTransform, UnitQuat, Vec3};
use gsl_core::low_level_policy::{
    infer_canonical_trajectory, retrieve, PolicyConfig, SkillEmbedding,
};
use gsl_core::sensing::SensorNoise;
use gsl_core::skill_discovery::{
    build_library, canonicalize, un_canonicalize, AnchorMode, CanonicalSkill, LibraryMeta,
    SkillLabel, SkillLibrary, SkillTriplet,
};
use gsl_core::world::family::Placement;
use gsl_core::world::{GripperState, Trajectory};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn rand_vec(rng: &mut ChaCha8Rng, r: f64) -> Vec3 {
    Vec3::new(
        rng.random_range(-r..r),
        rng.random_range(-r..r),
        rng.random_range(-r..r),
    )
}

fn rand_quat(rng: &mut ChaCha8Rng) -> UnitQuat {
    let axis = rand_vec(rng, 1.0) + Vec3::new(0.0, 0.0, 1e-3);
    UnitQuat::from_axis_angle(axis, rng.random_range(-3.1..3.1))
}

fn rand_traj(rng: &mut ChaCha8Rng, n: usize) -> Trajectory {
    Trajectory::new(
        (0..n)
            .map(|_| {
                GripperState::new(
                    rand_vec(rng, 0.5),
                    rand_quat(rng),
                    rng.random_range(0.0..=1.0),
                )
            })
            .collect(),
    )
    .unwrap()
}

fn rand_cloud(rng: &mut ChaCha8Rng, n: usize, spread: Vec3) -> PointCloud {
    PointCloud::new(
        (0..n)
            .map(|_| {
                let v = rand_vec(rng, 1.0);
                Vec3::new(v.x * spread.x, v.y * spread.y, v.z * spread.z)
            })
            .collect(),
    )
    .unwrap()
}

fn max_state_gap(a: &GripperState, b: &GripperState) -> f64 {
    // q and -q are the same rotation
    let sign = a.orientation.dot(b.orientation).signum();
    let (p, q) = (a.orientation.to_array(), b.orientation.to_array());
    let dq = (0..4)
        .map(|k| (p[k] - sign * q[k]).abs())
        .fold(0.0, f64::max);
    a.position
        .distance(b.position)
        .max(dq)
        .max((a.aperture - b.aperture).abs())
}

fn meta(variant: Variant) -> LibraryMeta {
    LibraryMeta {
        variant,
        anchor_mode: AnchorMode::Centroid,
        augment: 1,
        seed: 0,
    }
}

/// un_canonicalize(canonicalize(x)) == x within 1e-12 over 1000 triples.
fn round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for k in 0..1000 {
        let n = rng.random_range(1..60);
        let cloud =
            rand_cloud(&mut rng, n, Vec3::new(0.3, 0.3, 0.3)).translated(rand_vec(&mut rng, 1.0));
        let len = rng.random_range(1..40);
        let traj = rand_traj(&mut rng, len);
        let t = SkillTriplet {
            label: SkillLabel::Pick,
            target: 1,
            object_cloud: cloud,
            channel: None,
            trajectory: traj.clone(),
        };
        let mode = if k % 2 == 0 {
            AnchorMode::Centroid
        } else {
            AnchorMode::Random
        };
        let c = canonicalize(&t, mode, &mut rng, (0, 0));
        let back = un_canonicalize(&c.traj_c, c.anchor);
        for (a, b) in back.steps().iter().zip(traj.steps()) {
            worst = worst.max(max_state_gap(a, b));
        }
        if back.len() != traj.len() {
            worst = f64::INFINITY;
        }
    }
    outcome(worst <= 1e-12, format!("max deviation {worst:.3e}"))
}

/// Translating the whole task translates the executed trajectory.
fn translation_equivariance(lib: &SkillLibrary, cfg: &BenchmarkConfig) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let names: Vec<String> = cfg.families.keys().cloned().collect();
    let exec = ExecConfig::default();
    let noise = SensorNoise::default();
    let mut worst: f64 = 0.0;
    let mut mismatched = 0;
    let mut successes = 0;
    let placement = Placement::in_region(cfg.train_region);
    for k in 0..200 {
        let fam = &cfg.families[&names[k % names.len()]];
        let seed: u64 = rng.random();
        let task = fam
            .sample(&placement, &cfg.scene, &fam.name, seed)
            .unwrap()
            .task;
        let t = Vec3::new(
            rng.random_range(-0.15..0.15),
            rng.random_range(-0.1..0.12),
            0.0,
        );
        let a = execute_task(&task, lib, Variant::Complete, &noise, seed, &exec);
        let b = execute_task(
            &task.translated(t),
            lib,
            Variant::Complete,
            &noise,
            seed,
            &exec,
        );
        successes += usize::from(a.success);
        if a.success != b.success
            || a.trajectory.len() != b.trajectory.len()
            || a.error.is_some() != b.error.is_some()
        {
            mismatched += 1;
            continue;
        }
        for (x, y) in a.trajectory.iter().zip(&b.trajectory) {
            worst = worst.max(max_state_gap(&x.translated(t), y));
        }
    }
    outcome(
        mismatched == 0 && worst <= 1e-6,
        format!("max waypoint gap {worst:.3e}, outcome mismatches {mismatched}/200, successes {successes}/200"),
    )
}

/// Rotating the query about its centroid rotates the inferred trajectory.
fn rotation_equivariance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    // anisotropic, asymmetric clouds: distinct principal variances and no
    // rotational self-symmetry
    let mut entries = vec![];
    for i in 0..3 {
        let mut c = rand_cloud(&mut rng, 150, Vec3::new(0.12, 0.06, 0.03));
        let mean = c.centroid();
        c = c.translated(-mean);
        entries.push(CanonicalSkill {
            label: SkillLabel::Pick,
            cloud_c: c,
            channel: None,
            traj_c: rand_traj(&mut rng, 10 + i),
            anchor: Vec3::ZERO,
            source: (i, 0),
        });
    }
    let lib = SkillLibrary::new(meta(Variant::Complete), entries);
    let cfg = PolicyConfig {
        rotation_canonical: true,
        ..Default::default()
    };
    let mut worst: f64 = 0.0;
    for k in 0..100 {
        let e = &lib.entries()[k % 3];
        let r = RigidTransform::from_rotation(rand_quat(&mut rng));
        let q = apply_transform(&r, &e.cloud_c);
        let emb = SkillEmbedding::of(SkillLabel::Pick);
        let base = infer_canonical_trajectory(&lib, &emb, &e.cloud_c, None, &cfg, 0).unwrap();
        let rotated = infer_canonical_trajectory(&lib, &emb, &q, None, &cfg, 0).unwrap();
        let want = base.transformed(&r);
        if want.len() != rotated.len() {
            worst = f64::INFINITY;
            continue;
        }
        for (a, b) in want.steps().iter().zip(rotated.steps()) {
            worst = worst.max(max_state_gap(a, b));
        }
    }
    outcome(
        worst <= 1e-6,
        format!("max deviation {worst:.3e} over 100 rotations"),
    )
}

/// Keyframes by a direct scan of the rules, written separately.
fn brute_keyframes(s: &[GripperState], cfg: &KeyframeConfig) -> Vec<usize> {
    let m = s.len();
    let step = |i: usize| -> f64 {
        let (a, b) = (s[i - 1].position, s[i].position);
        ((a.x - b.x).powi(2) + (a.y - b.y).powi(2) + (a.z - b.z).powi(2)).sqrt()
    };
    let mut keep = vec![false; m];
    keep[0] = true;
    keep[m - 1] = true;
    for i in 1..m - 1 {
        let before = s[i - 1].aperture;
        let now = s[i].aperture;
        if (before >= cfg.close_threshold && now < cfg.close_threshold)
            || (before <= cfg.open_threshold && now > cfg.open_threshold)
        {
            keep[i] = true;
        }
        if i >= 2 {
            let v = step(i);
            if v < cfg.v_eps && step(i - 1) > v && step(i + 1) > v {
                keep[i] = true;
            }
        }
    }
    (0..m).filter(|&i| keep[i]).collect()
}

fn keyframe_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let cfg = KeyframeConfig::default();
    let mut bad = 0;
    for _ in 0..100 {
        let m = rng.random_range(2..120);
        let mut p = rand_vec(&mut rng, 0.2);
        let mut v = rand_vec(&mut rng, 0.01);
        let mut c: f64 = 1.0;
        let mut steps = vec![];
        for _ in 0..m {
            // smooth drift with occasional near stops and gripper moves
            let roll: f64 = rng.random();
            let scale = if roll < 0.15 {
                0.02
            } else if roll < 0.2 {
                0.0
            } else {
                1.0
            };
            v += rand_vec(&mut rng, 0.003);
            p += v * scale;
            if rng.random::<f64>() < 0.1 {
                c = rng.random_range(0.0..=1.0);
            }
            steps.push(GripperState::new(p, UnitQuat::IDENTITY, c));
        }
        let want = brute_keyframes(&steps, &cfg);
        let got = extract_keyframes(&Trajectory::new(steps).unwrap(), &cfg)
            .unwrap()
            .indices;
        bad += usize::from(got != want);
    }
    outcome(bad == 0, format!("{bad}/100 trajectories disagree"))
}

/// Exhaustive chamfer nearest neighbour with ties to the lowest index.
fn brute_chamfer<const D: usize>(a: &[[f64; D]], b: &[[f64; D]]) -> f64 {
    let one = |from: &[[f64; D]], to: &[[f64; D]]| {
        let mut sum = 0.0;
        for p in from {
            let mut best = f64::INFINITY;
            for q in to {
                let d: f64 = (0..D).map(|k| (p[k] - q[k]) * (p[k] - q[k])).sum();
                best = best.min(d);
            }
            sum += best.sqrt();
        }
        sum / from.len() as f64
    };
    0.5 * (one(a, b) + one(b, a))
}

fn rows4(c: &PointCloud, ch: Option<&[f64]>) -> Vec<[f64; 4]> {
    c.points()
        .iter()
        .enumerate()
        .map(|(i, p)| [p.x, p.y, p.z, ch.map_or(0.0, |v| v[i])])
        .collect()
}

fn retrieval_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let labels = [SkillLabel::Pick, SkillLabel::Press, SkillLabel::Place];
    let make = |rng: &mut ChaCha8Rng, with_channel: bool| {
        let mut entries = vec![];
        for i in 0..24 {
            let n = rng.random_range(20..80);
            let cloud = rand_cloud(rng, n, Vec3::new(0.1, 0.08, 0.05));
            let channel =
                with_channel.then(|| (0..n).map(|_| rng.random_range(0.0..0.2)).collect());
            entries.push(CanonicalSkill {
                label: labels[i % 3],
                cloud_c: cloud,
                channel,
                traj_c: rand_traj(rng, 3),
                anchor: Vec3::ZERO,
                source: (i, 0),
            });
        }
        SkillLibrary::new(meta(Variant::Complete), entries)
    };
    let plain = make(&mut rng, false);
    let heat = make(&mut rng, true);
    let cfg = PolicyConfig::default();
    let mut bad = 0;
    for k in 0..500 {
        let with_channel = k % 5 == 4;
        let lib = if with_channel { &heat } else { &plain };
        let label = labels[k % 3];
        let n = rng.random_range(10..80);
        let q = rand_cloud(&mut rng, n, Vec3::new(0.1, 0.08, 0.05));
        let ch: Option<Vec<f64>> =
            with_channel.then(|| (0..n).map(|_| rng.random_range(0.0..0.2)).collect());
        let got = retrieve(lib, label, &q, ch.as_deref(), &cfg, 0)
            .unwrap()
            .entry;
        let mut best = (f64::INFINITY, usize::MAX);
        for (i, e) in lib.entries().iter().enumerate() {
            if e.label != label {
                continue;
            }
            let d = if with_channel {
                brute_chamfer(
                    &rows4(&q, ch.as_deref()),
                    &rows4(&e.cloud_c, e.channel.as_deref()),
                )
            } else {
                brute_chamfer(&q.as_arrays(), &e.cloud_c.as_arrays())
            };
            if d < best.0 {
                best = (d, i);
            }
        }
        bad += usize::from(got != best.1);
    }
    outcome(bad == 0, format!("{bad}/500 queries disagree"))
}

fn rate(rows: &[EpisodeRow], variant: Variant, split: Option<SplitKind>) -> f64 {
    let table = summarize(rows);
    let rates: Vec<f64> = table
        .iter()
        .filter(|t| t.variant == variant && split.is_none_or(|s| t.split == s))
        .map(|t| t.rate)
        .collect();
    rates.iter().sum::<f64>() / rates.len().max(1) as f64
}

fn spatial(lib: &SkillLibrary, cfg: &BenchmarkConfig) -> Outcome {
    let start = Instant::now();
    let splits: Vec<_> = make_splits(cfg, 11)
        .unwrap()
        .into_iter()
        .filter(|s| s.kind == SplitKind::Spatial)
        .collect();
    let rows = run_benchmark(&splits, &[(Variant::Complete, lib)], &cfg.noise, &cfg.exec).unwrap();
    let r = rate(&rows, Variant::Complete, Some(SplitKind::Spatial));
    let secs = start.elapsed().as_secs_f64();
    outcome(
        r >= 0.90 && secs < 300.0,
        format!(
            "spatial success {r:.4} over {} episodes (floor 0.90), {secs:.1} s",
            rows.len()
        ),
    )
}

fn ordering(rows: &[EpisodeRow], secs: f64) -> Outcome {
    let m = |v| rate(rows, v, None);
    let (c, r) = (m(Variant::Complete), m(Variant::RegularSkill));
    let (h, n, a) = (
        m(Variant::HeatmapInterface),
        m(Variant::NoCanonicalization),
        m(Variant::ActionInterface),
    );
    let pass = c > r && r > h.max(n).max(a) && c - n >= 0.40 && c - r >= 0.25 && secs < 900.0;
    outcome(
        pass,
        format!(
            "complete {c:.4}, regular_skill {r:.4}, heatmap {h:.4}, no_canonicalization {n:.4}, action {a:.4}; \
             gaps {:.4} / {:.4}; {secs:.1} s",
            c - n,
            c - r
        ),
    )
}

fn compositional(rows: &[EpisodeRow]) -> Outcome {
    let c = rate(rows, Variant::Complete, Some(SplitKind::Compositional));
    let n = rate(
        rows,
        Variant::NoCanonicalization,
        Some(SplitKind::Compositional),
    );
    outcome(
        c >= 0.80 && n <= 0.30,
        format!("complete {c:.4} (floor 0.80), no_canonicalization {n:.4} (ceiling 0.30)"),
    )
}

fn gsl(args: &[&str], dir: &Path) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_gsl"))
        .args(args)
        .current_dir(dir)
        .env_remove("GSL_CONFIG_DIR")
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!(
            "gsl {args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        ))
    }
}

fn report_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect();
    v.sort();
    v
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let run = || -> Result<bool, String> {
        gsl(&["gen-demos", "--out", "demos.jsonl", "--seed", "5"], d)?;
        gsl(
            &["discover", "--demos", "demos.jsonl", "--out", "lib.jsonl"],
            d,
        )?;
        let eval = |out: &str, workers: &str| {
            gsl(
                &[
                    "eval",
                    "--library",
                    "lib.jsonl",
                    "--ablation",
                    "complete",
                    "--rollouts",
                    "20",
                    "--seed",
                    "9",
                    "--out",
                    out,
                    "--workers",
                    workers,
                ],
                d,
            )
        };
        eval("a", "1")?;
        eval("b", "1")?;
        eval("c", "4")?;
        let (a, b, c) = (
            report_files(&d.join("a")),
            report_files(&d.join("b")),
            report_files(&d.join("c")),
        );
        Ok(!a.is_empty() && a == b && a == c)
    };
    match run() {
        Ok(same) => outcome(
            same,
            format!("reports identical across runs and worker counts: {same}"),
        ),
        Err(e) => outcome(false, e),
    }
}

fn main() {
    let cfg = BenchmarkConfig::embedded();
    let demos = train_demos(&cfg, 1).expect("train demos");
    let lib = build_library(
        &demos,
        Variant::Complete,
        AnchorMode::Centroid,
        1,
        0,
        &cfg.exec.discovery,
        &cfg.exec.sensing,
    )
    .expect("library");

    let mut lines: Vec<(u8, &str, Outcome, f64)> = vec![];
    let mut timed =
        |id: u8, name: &'static str, f: &mut dyn FnMut() -> Outcome, limit: Option<f64>| {
            let start = Instant::now();
            let mut o = f();
            let secs = start.elapsed().as_secs_f64();
            if let Some(l) = limit {
                if secs >= l {
                    o.pass = false;
                    o.detail
                        .push_str(&format!("; runtime {secs:.2} s over {l} s"));
                }
            }
            lines.push((id, name, o, secs));
        };
    timed(1, "canonicalization round trip", &mut round_trip, Some(1.0));
    timed(
        2,
        "translation equivariance",
        &mut || translation_equivariance(&lib, &cfg),
        Some(60.0),
    );
    timed(
        3,
        "rotation equivariance",
        &mut rotation_equivariance,
        Some(30.0),
    );
    timed(4, "keyframe oracle", &mut keyframe_oracle, None);
    timed(5, "retrieval oracle", &mut retrieval_oracle, None);
    timed(
        6,
        "spatial generalization",
        &mut || spatial(&lib, &cfg),
        Some(300.0),
    );

    let start = Instant::now();
    let splits = make_splits(&cfg, 13).unwrap();
    let (_, rows) = run_ablation(
        &demos,
        Variant::ALL,
        &splits,
        AnchorMode::Centroid,
        1,
        0,
        &cfg.noise,
        &cfg.exec,
        std::thread::available_parallelism().map_or(1, |n| n.get()),
    )
    .expect("ablation");
    let ablate_secs = start.elapsed().as_secs_f64();
    timed(
        7,
        "ablation ordering",
        &mut || ordering(&rows, ablate_secs),
        None,
    );
    timed(
        8,
        "compositional generalization",
        &mut || compositional(&rows),
        None,
    );
    timed(9, "determinism", &mut determinism, None);

    let mut failed = 0;
    for (id, name, o, secs) in &lines {
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!(
            "criterion {id} {name}: {verdict} ({}; {secs:.2} s)",
            o.detail
        );
        failed += usize::from(!o.pass);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
