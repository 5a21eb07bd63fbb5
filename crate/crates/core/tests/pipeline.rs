//! End-to-end flows through the public API: fit, persist, reload, score,
//! and the file formats that carry data between stages.

use lafad::{
    apply_label_windows, default_config, draw_plan, generate, load_label_windows, load_nab_csv,
    ordered_split, run_experiment, write_label_windows, write_nab_csv, BootstrapPlan, Error,
    FittedEnsemble, KnnConfig, Method, PipelineConfig, ReportFormat, SamplingConfig, SplitSpec,
    TimeSeries,
};

fn synthetic_series(n: usize, seed: u64, normal_prob: f64) -> TimeSeries {
    let mut cfg = default_config(10.0);
    cfg.len = n;
    cfg.seed = seed;
    cfg.normal_prob = normal_prob;
    generate(&cfg).unwrap().labeled_series()
}

fn quick_pipeline(seed: u64) -> PipelineConfig {
    let mut cfg = PipelineConfig {
        bootstraps: 4,
        sampling: SamplingConfig {
            samples_per_point: 100,
            ..Default::default()
        },
        ..Default::default()
    }
    .with_seed(seed);
    cfg.specs.truncate(3);
    cfg
}

#[test]
fn fit_persist_reload_score_round_trip() {
    let series = synthetic_series(1400, 11, 0.97);
    let split = SplitSpec::new(0.8, 1, 11).unwrap().fixed();
    let (train, val) = ordered_split(&series, &split)
        .unwrap()
        .into_iter()
        .next()
        .unwrap();
    let out = lafad::run_pipeline(&train, &val, &quick_pipeline(11)).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ensemble.json");
    out.fitted.save(&path).unwrap();
    let reloaded = FittedEnsemble::load(&path).unwrap();
    assert_eq!(reloaded, out.fitted);

    // Scoring through the reloaded model reproduces the pipeline verdicts.
    let rescored = reloaded.score_series(&val).unwrap();
    assert_eq!(rescored, out.verdicts);
}

#[test]
fn corrupted_model_file_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    std::fs::write(&path, "{\"schema_version\": 1, \"boot").unwrap();
    assert!(matches!(FittedEnsemble::load(&path), Err(Error::Json(_))));
    std::fs::write(&path, "not json at all").unwrap();
    assert!(FittedEnsemble::load(&path).is_err());
}

#[test]
fn bootstrap_plan_text_survives_round_trip() {
    let plan = draw_plan(120, 9, 0.8, 23).unwrap();
    let text = plan.write_text();
    let back = BootstrapPlan::from_text(&text).unwrap();
    assert_eq!(back, plan);
    for j in 0..=9 {
        assert_eq!(back.in_bag_indices(j), plan.in_bag_indices(j));
    }
}

#[test]
fn series_csv_round_trip_preserves_points() {
    let series = synthetic_series(500, 3, 0.999);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("series.csv");
    write_nab_csv(&series, &path).unwrap();
    let back = load_nab_csv(&path).unwrap();
    assert_eq!(back.len(), series.len());
    for (a, b) in back.points().iter().zip(series.points()) {
        assert_eq!(a.timestamp, b.timestamp);
        assert_eq!(a.value, b.value, "values must survive the CSV exactly");
    }
    // The CSV format carries no labels.
    assert!(back.labels().is_none());
}

#[test]
fn label_window_file_flow_marks_expected_points() {
    let out = generate(&{
        let mut c = default_config(10.0);
        c.len = 800;
        c.seed = 19;
        c.normal_prob = 0.98;
        c
    })
    .unwrap();
    let windows = out.anomaly_windows();
    assert!(!windows.is_empty(), "seed 19 should produce anomalies");

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("labels.csv");
    write_label_windows(&windows, &path).unwrap();
    let loaded = load_label_windows(&path).unwrap();
    assert_eq!(loaded, windows);

    let relabeled = apply_label_windows(&out.series, &loaded);
    assert_eq!(relabeled.labels().unwrap(), out.labels.as_slice());
}

#[test]
fn experiment_is_reproducible_through_the_report_layer() {
    let series = synthetic_series(1400, 29, 0.95);
    let split = SplitSpec::new(0.8, 2, 29).unwrap();
    let knn = KnnConfig::default();
    let run = || {
        run_experiment(
            &series,
            &[Method::LafAd, Method::Knn],
            &split,
            5,
            &quick_pipeline(29),
            &knn,
            "integration",
        )
        .unwrap()
    };
    let a = run();
    let b = run();
    assert_eq!(
        lafad::emit_report(&a, ReportFormat::Json).unwrap(),
        lafad::emit_report(&b, ReportFormat::Json).unwrap()
    );
    let csv = lafad::emit_report(&a, ReportFormat::Csv).unwrap();
    assert_eq!(csv.trim_end().lines().count(), 1 + 2 * 2);
}
