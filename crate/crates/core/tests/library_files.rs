use gsl_core::evaluation::{
    make_splits, read_results, run_benchmark, train_demos, write_results, BenchmarkConfig,
    ResultsMeta, SplitKind, Variant,
};
use gsl_core::skill_discovery::{build_library, read_library, write_library, AnchorMode};

#[test]
fn heatmap_library_round_trips_byte_for_byte() {
    let cfg = BenchmarkConfig::embedded();
    let demos = train_demos(&cfg, 2).unwrap();
    let lib = build_library(
        &demos,
        Variant::HeatmapInterface,
        AnchorMode::Random,
        2,
        5,
        &cfg.exec.discovery,
        &cfg.exec.sensing,
    )
    .unwrap();
    assert!(lib.entries().iter().all(|e| e.channel.is_some()));
    let mut buf = vec![];
    write_library(&mut buf, &lib).unwrap();
    let back = read_library(buf.as_slice()).unwrap();
    assert_eq!(back.meta, lib.meta);
    let mut again = vec![];
    write_library(&mut again, &back).unwrap();
    assert_eq!(again, buf);
}

#[test]
fn results_round_trip() {
    let mut cfg = BenchmarkConfig::embedded();
    cfg.rollouts = 1;
    let demos = train_demos(&cfg, 2).unwrap();
    let lib = build_library(
        &demos,
        Variant::Complete,
        AnchorMode::Centroid,
        1,
        0,
        &cfg.exec.discovery,
        &cfg.exec.sensing,
    )
    .unwrap();
    let splits: Vec<_> = make_splits(&cfg, 3)
        .unwrap()
        .into_iter()
        .filter(|s| s.kind == SplitKind::Distractor)
        .collect();
    let rows = run_benchmark(&splits, &[(Variant::Complete, &lib)], &cfg.noise, &cfg.exec).unwrap();
    let meta = ResultsMeta {
        libraries: vec![(Variant::Complete, "lib.jsonl".into())],
        noise: cfg.noise,
        exec: cfg.exec.clone(),
    };
    let mut buf = vec![];
    write_results(&mut buf, &meta, &rows).unwrap();
    let (m, r) = read_results(buf.as_slice()).unwrap();
    assert_eq!(m, meta);
    assert_eq!(r, rows);
}

#[test]
fn library_built_for_another_variant_is_refused() {
    let cfg = BenchmarkConfig::embedded();
    let demos = train_demos(&cfg, 2).unwrap();
    let lib = build_library(
        &demos,
        Variant::Complete,
        AnchorMode::Centroid,
        1,
        0,
        &cfg.exec.discovery,
        &cfg.exec.sensing,
    )
    .unwrap();
    let splits = make_splits(&cfg, 3).unwrap();
    assert!(run_benchmark(
        &splits,
        &[(Variant::ActionInterface, &lib)],
        &cfg.noise,
        &cfg.exec
    )
    .is_err());
}
