use super::*;
use crate::ingest::Segment;

#[test]
fn confusion_counts_examples() {
    // preds [F,F,N,N] against labels [F,N,F,N].
    let c = confusion(&[true, true, false, false], &[true, false, true, false]).unwrap();
    assert_eq!(
        c,
        ConfusionCounts {
            tp: 1,
            tn: 1,
            fp: 1,
            fn_: 1
        }
    );

    let all_right = confusion(&[true, false], &[true, false]).unwrap();
    assert_eq!(all_right.fp, 0);
    assert_eq!(all_right.fn_, 0);

    let no_fog = confusion(&[false, true], &[false, false]).unwrap();
    assert_eq!(no_fog.tp, 0);
    assert_eq!(no_fog.fn_, 0);

    assert!(confusion(&[true], &[true, false]).is_err());
}

#[test]
fn recall_ratios_and_undefined_marker() {
    let c = ConfusionCounts {
        tp: 9,
        fn_: 1,
        tn: 0,
        fp: 10,
    };
    assert_eq!(c.sensitivity(), Some(0.9));
    assert_eq!(c.specificity(), Some(0.0));
    assert_eq!(c.average_recall(), Some(0.45));

    let degenerate = ConfusionCounts {
        tp: 0,
        fn_: 0,
        tn: 5,
        fp: 0,
    };
    assert_eq!(degenerate.sensitivity(), None);
    assert_eq!(degenerate.specificity(), Some(1.0));
    assert_eq!(degenerate.average_recall(), None);
}

fn lcg_noise(state: &mut u64) -> f64 {
    *state = state
        .wrapping_mul(6364136223846793005)
        .wrapping_add(1442695040888963407);
    ((*state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
}

/// Segments with spectrally distinct FoG and Normal stretches; two subjects.
fn demo_segments() -> Vec<Segment> {
    let mut out = Vec::new();
    for subject in [1u8, 2] {
        let mut noise_state = subject as u64 * 7919;
        let blocks = 30usize;
        let block_len = 192usize;
        let n = blocks * block_len;
        let mut fog = Vec::with_capacity(n);
        let mut channels: Vec<Vec<f32>> = vec![Vec::with_capacity(n); 9];
        for b in 0..blocks {
            let is_fog = b % 3 == 2;
            for i in 0..block_len {
                let t = (b * block_len + i) as f64 / 64.0;
                fog.push(is_fog);
                for (c, channel) in channels.iter_mut().enumerate() {
                    let amp = 300.0 / (1.0 + c as f64 * 0.3);
                    let freq = if is_fog { 5.3 } else { 1.2 };
                    let v = amp * (std::f64::consts::TAU * freq * t + c as f64).sin()
                        + 40.0 * lcg_noise(&mut noise_state);
                    channel.push(v as f32);
                }
            }
        }
        out.push(Segment {
            subject: crate::ingest::SubjectId(subject),
            timestamps: (0..n as i64).map(|t| t * 15625 / 1000).collect(),
            channels,
            fog,
        });
    }
    out
}

fn quick_config(family: ModelFamily) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(family, 1);
    cfg.protocol = Protocol::CrossValidation { folds: 3 };
    cfg.protonn.epochs = 8;
    cfg.protonn.n_prototypes = 6;
    cfg.protonn.proj_dim = 5;
    cfg.forest.n_trees = 5;
    cfg
}

fn strip_timing(report: &EvalReport) -> serde_json::Value {
    let mut v: serde_json::Value = serde_json::from_str(&report.to_json()).unwrap();
    v.as_object_mut().unwrap().remove("timing");
    v
}

#[test]
fn experiment_is_deterministic_modulo_timing() {
    let segments = demo_segments();
    let cfg = quick_config(ModelFamily::ProtoNn);
    let a = run_experiment(&segments, &cfg).unwrap();
    let b = run_experiment(&segments, &cfg).unwrap();
    assert_eq!(strip_timing(&a), strip_timing(&b));
    assert_eq!(a.config_hash, b.config_hash);
    assert_eq!(a.dataset_digest, b.dataset_digest);

    // Counts sum to the window total and the aggregate is the exact mean.
    assert_eq!(a.counts.total() as usize, a.n_windows);
    let avg = (a.sensitivity.unwrap() + a.specificity.unwrap()) / 2.0;
    assert_eq!(a.average_recall.unwrap(), avg);

    // Separable synthetic data: every family should do well.
    assert!(a.average_recall.unwrap() > 0.9);
}

#[test]
fn trees_and_forests_run_through_harness() {
    let segments = demo_segments();
    for family in [ModelFamily::DecisionTree, ModelFamily::RandomForest] {
        let cfg = quick_config(family);
        let report = run_experiment(&segments, &cfg).unwrap();
        assert!(report.average_recall.unwrap() > 0.9, "{family:?}");
        assert!(report.model_size_bytes > 0);
        assert_eq!(report.folds.len(), 3);
    }
}

#[test]
fn per_subject_breakdown_covers_all_windows() {
    let segments = demo_segments();
    let report = run_experiment(&segments, &quick_config(ModelFamily::DecisionTree)).unwrap();
    assert_eq!(report.per_subject.len(), 2);
    let total: u64 = report.per_subject.iter().map(|s| s.counts.total()).sum();
    assert_eq!(total as usize, report.n_windows);
}

#[test]
fn selection_runs_inside_folds() {
    let segments = demo_segments();
    let mut cfg = quick_config(ModelFamily::ProtoNn);
    cfg.feature_spec = FeatureSpec::SelectedFromFull { count: 8 };
    let report = run_experiment(&segments, &cfg).unwrap();
    for fold in &report.folds {
        assert_eq!(fold.selected_features.len(), 8);
    }
    assert!(report.average_recall.unwrap() > 0.9);
}

#[test]
fn fitted_artifacts_ignore_validation_labels() {
    let segments = demo_segments();
    let cfg = {
        let mut c = quick_config(ModelFamily::ProtoNn);
        c.feature_spec = FeatureSpec::SelectedFromFull { count: 6 };
        c
    };
    let params = cfg.window_params();
    let windows = make_windows(&segments, &params, LabelRule::Majority).unwrap();
    let descriptors = cfg.feature_spec.candidate_descriptors(&cfg.channels).unwrap();
    let full = extract_matrix_for(&segments, &windows, &params, &descriptors).unwrap();
    let (train_rows, val_rows) = stratified_split(full.labels(), 0.7, cfg.seed).unwrap();

    // Permute (here: flip) every validation label; training rows untouched.
    let mut flipped_labels = full.labels().to_vec();
    for &r in &val_rows {
        flipped_labels[r] = !flipped_labels[r];
    }
    let flipped = FeatureMatrix::new(
        full.descriptors().to_vec(),
        full.values().to_vec(),
        flipped_labels,
        full.subjects().to_vec(),
    )
    .unwrap();

    let (model_a, cols_a, subset_a, stats_a) = fit_fold(&full, &train_rows, &cfg, 0).unwrap();
    let (model_b, cols_b, subset_b, stats_b) = fit_fold(&flipped, &train_rows, &cfg, 0).unwrap();
    assert_eq!(subset_a.descriptors, subset_b.descriptors);
    assert_eq!(stats_a, stats_b);
    assert_eq!(cols_a, cols_b);
    assert_eq!(model_a.to_bytes().unwrap(), model_b.to_bytes().unwrap());

    // Metrics, by contrast, must move.
    let preds = predict_rows(&model_a, &full, &cols_a, &val_rows).unwrap();
    let truth_a: Vec<bool> = val_rows.iter().map(|&r| full.labels()[r]).collect();
    let truth_b: Vec<bool> = val_rows.iter().map(|&r| flipped.labels()[r]).collect();
    let c_a = confusion(&preds, &truth_a).unwrap();
    let c_b = confusion(&preds, &truth_b).unwrap();
    assert_ne!(c_a, c_b);
}

#[test]
fn config_validation_names_fields() {
    let segments = demo_segments();
    let mut cfg = quick_config(ModelFamily::ProtoNn);
    cfg.channels.clear();
    match run_experiment(&segments, &cfg) {
        Err(Error::Config { field, .. }) => assert_eq!(field, "channels"),
        other => panic!("expected config error, got {other:?}"),
    }

    let mut cfg = quick_config(ModelFamily::ProtoNn);
    cfg.protocol = Protocol::Split { ratio: 1.0 };
    match run_experiment(&segments, &cfg) {
        Err(Error::Config { field, .. }) => assert_eq!(field, "ratio"),
        other => panic!("expected config error, got {other:?}"),
    }

    let mut cfg = quick_config(ModelFamily::ProtoNn);
    cfg.protocol = Protocol::CrossValidation { folds: 1 };
    match run_experiment(&segments, &cfg) {
        Err(Error::Config { field, .. }) => assert_eq!(field, "folds"),
        other => panic!("expected config error, got {other:?}"),
    }
}

#[test]
fn report_json_roundtrips() {
    let segments = demo_segments();
    let report = run_experiment(&segments, &quick_config(ModelFamily::DecisionTree)).unwrap();
    let back = EvalReport::from_json(&report.to_json()).unwrap();
    let a: serde_json::Value = serde_json::from_str(&report.to_json()).unwrap();
    let b: serde_json::Value = serde_json::from_str(&back.to_json()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn sweep_produces_rows_per_family() {
    let segments = demo_segments();
    let mut cfg = quick_config(ModelFamily::ProtoNn);
    cfg.protonn.epochs = 5;
    cfg.feature_spec = FeatureSpec::SelectedFromFull { count: 6 };
    let table = size_recall_sweep(&segments, &cfg, &[600, 4096]).unwrap();
    let protonn_rows = table
        .rows
        .iter()
        .filter(|r| r.family == ModelFamily::ProtoNn)
        .count();
    let tree_rows = table
        .rows
        .iter()
        .filter(|r| r.family == ModelFamily::DecisionTree)
        .count();
    assert!(protonn_rows >= 1);
    assert_eq!(tree_rows, 2);
    for row in &table.rows {
        assert!(row.achieved_bytes <= row.target_bytes);
    }
    let csv = table.to_csv();
    assert!(csv.lines().count() == table.rows.len() + 1);

    // Single-entry grid still yields a curve row per family.
    let one = size_recall_sweep(&segments, &cfg, &[4096]).unwrap();
    assert!(one.rows.iter().any(|r| r.family == ModelFamily::ProtoNn));
    assert!(one
        .rows
        .iter()
        .any(|r| r.family == ModelFamily::DecisionTree));
}

#[test]
fn latency_bench_reports_ratio() {
    let segments = demo_segments();
    let cfg = quick_config(ModelFamily::ProtoNn);
    let table = feature_latency_bench(&segments, &cfg, &[1]).unwrap();
    assert_eq!(table.rows.len(), 1);
    let row = &table.rows[0];
    assert!(row.full_subset_us > 0.0 && row.time_subset_us > 0.0);
    assert!(row.ratio > 1.0, "frequency features must cost more");
    assert_eq!(row.time_subset_len, DEFAULT_SELECTED_TIME);

    // No windows (window longer than any segment) -> empty table.
    let empty = feature_latency_bench(&segments, &cfg, &[120]).unwrap();
    assert!(empty.rows.is_empty());
}

#[test]
fn ablation_full_set_matches_direct_run() {
    let segments = demo_segments();
    let mut cfg = quick_config(ModelFamily::DecisionTree);
    cfg.feature_spec = FeatureSpec::FullGrid;
    let table = sensor_ablation(&segments, &cfg).unwrap();
    assert_eq!(table.rows.len(), 7);
    let full = table
        .row(&[Sensor::Ankle, Sensor::Leg, Sensor::Torso])
        .unwrap();
    let direct = run_experiment(&segments, &cfg).unwrap();
    assert_eq!(full.average_recall, direct.average_recall);
}
