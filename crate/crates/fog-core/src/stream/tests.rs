use super::*;
use crate::features::{
    extract_matrix_for, make_windows, Channel, FeatureDescriptor, FeatureKind, LabelRule,
    WindowParams,
};
use crate::ingest::{binarize_segments, Episode, SampleRecord, SubjectId};
use crate::protonn::{Mat32, ProtoNnModel};
use crate::trees::{DecisionTree, Node};

fn sine_sample(i: usize, freq: f64, amp: f64) -> i32 {
    (amp * (std::f64::consts::TAU * freq * i as f64 / 64.0).sin()).round() as i32
}

/// Recording with alternating normal-gait and freeze-band blocks plus a
/// debrief gap in the middle.
fn synthetic_recording(blocks: &[(usize, Label)]) -> Recording {
    let mut samples = Vec::new();
    let mut i = 0usize;
    for &(len, label) in blocks {
        for _ in 0..len {
            let value = match label {
                Label::Fog => sine_sample(i, 5.5, 300.0),
                Label::Normal => sine_sample(i, 1.2, 400.0),
                Label::Debrief => 0,
            };
            let wiggle = ((i * 37) % 23) as i32 - 11;
            samples.push(SampleRecord {
                timestamp_ms: (i as i64 * 15625) / 1000,
                accel: [
                    value + wiggle,
                    value / 2,
                    value / 3,
                    value / 2 + wiggle,
                    value / 3,
                    value / 4,
                    value / 4,
                    value / 5,
                    value / 6,
                ],
                label,
            });
            i += 1;
        }
    }
    Recording {
        subject: SubjectId(1),
        run: 1,
        samples,
    }
}

fn freeze_index_subset() -> FeatureSubset {
    FeatureSubset::new(vec![
        FeatureDescriptor {
            channel: Channel::AnkleX,
            kind: FeatureKind::FreezeIndex,
        },
        FeatureDescriptor {
            channel: Channel::AnkleX,
            kind: FeatureKind::Std,
        },
    ])
}

/// Stump on the freeze index: FI > 1 predicts FoG.
fn stump_model() -> AnyModel {
    AnyModel::Tree(DecisionTree {
        n_features: 2,
        nodes: vec![
            Node::Split {
                feature: 0,
                threshold: 1.0,
                left: 1,
                right: 2,
            },
            Node::Leaf { class: 0, prob: 1.0 },
            Node::Leaf { class: 1, prob: 1.0 },
        ],
    })
}

fn always_fog_model() -> AnyModel {
    AnyModel::Tree(DecisionTree {
        n_features: 2,
        nodes: vec![Node::Leaf { class: 1, prob: 1.0 }],
    })
}

#[test]
fn ring_buffer_wraps_chronologically() {
    let mut ring = RingBuffer::new(8);
    for i in 0..20 {
        let mut sample = [0.0f32; NUM_CHANNELS];
        for (c, slot) in sample.iter_mut().enumerate() {
            *slot = (i * 10 + c) as f32;
        }
        ring.push(&sample);
        assert!(ring.len() <= ring.capacity());
    }
    let (a, b) = ring.latest(0, 8);
    let collected: Vec<f32> = a.iter().chain(b.iter()).copied().collect();
    let expected: Vec<f32> = (12..20).map(|i| (i * 10) as f32).collect();
    assert_eq!(collected, expected);

    let (a, b) = ring.latest(3, 5);
    let collected: Vec<f32> = a.iter().chain(b.iter()).copied().collect();
    let expected: Vec<f32> = (15..20).map(|i| (i * 10 + 3) as f32).collect();
    assert_eq!(collected, expected);
}

#[test]
fn all_normal_recording_triggers_nothing() {
    let rec = synthetic_recording(&[(64 * 30, Label::Normal)]);
    let config = StreamConfig::new(1, 64, 32, freeze_index_subset());
    let result = run_stream(&[rec], &config, &stump_model()).unwrap();
    assert_eq!(result.n_triggers, 0);
    assert!(result.n_predictions > 0);
    assert!(result.predictions().all(|e| !e.fog));
}

#[test]
fn prediction_count_matches_formula() {
    let n_samples = 64 * 20 + 17;
    let rec = synthetic_recording(&[(n_samples, Label::Normal)]);
    let config = StreamConfig::new(2, 64, 32, freeze_index_subset());
    let result = run_stream(&[rec], &config, &stump_model()).unwrap();
    let expected = (n_samples - 128) / 32 + 1;
    assert_eq!(result.n_predictions, expected);
}

#[test]
fn planted_freeze_burst_triggers_quickly() {
    let pre = 64 * 20;
    let rec = synthetic_recording(&[
        (pre, Label::Normal),
        (64 * 12, Label::Fog),
        (64 * 10, Label::Normal),
    ]);
    let episodes = vec![Episode {
        subject: SubjectId(1),
        start_ms: (pre as i64 * 15625) / 1000,
        len_samples: 64 * 12,
        duration_s: 12.0,
    }];
    let config = StreamConfig::new(1, 64, 32, freeze_index_subset());
    let result = run_stream(&[rec], &config, &stump_model()).unwrap();
    assert!(result.n_triggers >= 1);

    let report = detection_latency(&result.events, &episodes, 64);
    assert_eq!(report.detected, 1);
    assert_eq!(report.missed, 0);
    // Structural bound: one window length plus one stride.
    let bound_ms = 1000 + 500;
    assert!(report.mean_delay_ms.unwrap() <= bound_ms as f64);
}

#[test]
fn stream_matches_batch_bit_for_bit() {
    let rec = synthetic_recording(&[
        (64 * 8, Label::Normal),
        (64 * 5, Label::Fog),
        (64 * 3, Label::Debrief),
        (64 * 6 + 13, Label::Normal),
        (64 * 4, Label::Fog),
    ]);
    let subset = freeze_index_subset();
    let params = WindowParams::new(1, 64, 32);

    let segments = binarize_segments(&rec);
    let windows = make_windows(&segments, &params, LabelRule::Majority).unwrap();
    let matrix = extract_matrix_for(&segments, &windows, &params, &subset.descriptors).unwrap();
    let model = stump_model();
    let batch: Vec<bool> = (0..matrix.n_rows())
        .map(|i| model.predict_fog(matrix.row(i)).unwrap())
        .collect();

    let config = StreamConfig::new(1, 64, 32, subset);
    let result = run_stream(&[rec], &config, &model).unwrap();
    let streamed: Vec<bool> = result.predictions().map(|e| e.fog).collect();
    assert_eq!(batch, streamed);
    assert_eq!(windows.len(), streamed.len());

    // Window stamps line up with the batch view.
    for (event, window) in result.predictions().zip(&windows) {
        assert_eq!(event.start_ms, window.start_ms);
    }
}

#[test]
fn event_timestamps_are_monotone() {
    let rec = synthetic_recording(&[
        (64 * 6, Label::Normal),
        (64 * 4, Label::Fog),
        (64 * 6, Label::Normal),
        (64 * 4, Label::Fog),
    ]);
    let config = StreamConfig::new(1, 64, 16, freeze_index_subset());
    let result = run_stream(&[rec], &config, &stump_model()).unwrap();
    for pair in result.events.windows(2) {
        assert!(pair[1].end_ms >= pair[0].end_ms);
    }
}

#[test]
fn debounce_spaces_triggers() {
    let rec = synthetic_recording(&[(64 * 40, Label::Normal)]);
    let mut config = StreamConfig::new(1, 64, 16, freeze_index_subset());
    config.debounce_ms = Some(3000);
    let result = run_stream(&[rec], &config, &always_fog_model()).unwrap();
    assert!(result.n_triggers >= 2);
    let trigger_times: Vec<i64> = result.triggers().map(|e| e.end_ms).collect();
    for pair in trigger_times.windows(2) {
        assert!(
            pair[1] - pair[0] >= 3000,
            "triggers {} and {} closer than debounce",
            pair[0],
            pair[1]
        );
    }
}

#[test]
fn schema_mismatch_fails_before_streaming() {
    let rec = synthetic_recording(&[(64 * 4, Label::Normal)]);
    let subset = FeatureSubset::new(vec![FeatureDescriptor {
        channel: Channel::AnkleX,
        kind: FeatureKind::Mean,
    }]);
    let config = StreamConfig::new(1, 64, 32, subset);
    // Stump expects 2 features, manifest has 1.
    assert!(matches!(
        run_stream(&[rec], &config, &stump_model()),
        Err(Error::DimensionMismatch { .. })
    ));
}

fn small_protonn(input_dim: usize, proj_dim: usize, m: usize) -> AnyModel {
    AnyModel::ProtoNn(ProtoNnModel {
        projection: Mat32 {
            rows: proj_dim,
            cols: input_dim,
            data: vec![0.1; proj_dim * input_dim],
        },
        prototypes: Mat32 {
            rows: proj_dim,
            cols: m,
            data: vec![0.5; proj_dim * m],
        },
        scores: Mat32 {
            rows: 2,
            cols: m,
            data: vec![0.5; 2 * m],
        },
        gamma: 1.0,
        norm_mean: vec![0.0; input_dim],
        norm_std: vec![1.0; input_dim],
        schema_digest: [0u8; 32],
    })
}

#[test]
fn budget_arithmetic_matches_config() {
    // w=2 at 64 Hz: the ring alone is 128 x 9 x 4 = 4608 bytes.
    let time_subset = FeatureSubset::new(
        crate::features::descriptor_grid(&Channel::ALL, &FeatureKind::TIME_DOMAIN)
            .unwrap()
            .into_iter()
            .take(16)
            .collect(),
    );
    let config = StreamConfig::new(2, 64, 32, time_subset);
    let model = small_protonn(16, 8, 8);
    assert!(model.size_bytes() <= 1434, "model is {} B", model.size_bytes());
    let report = budget_check(&config, &model);
    assert_eq!(report.ring_bytes, 4608);
    // Time-domain subset: no spectrum buffer; 16 f32 features + model scratch.
    assert_eq!(report.feature_scratch_bytes, 16 * 4 + 4 * (8 + 2));
    assert_eq!(
        report.total_bytes,
        report.ring_bytes + report.feature_scratch_bytes + report.model_bytes
    );
    assert!(report.fits, "w=2 time-domain config must fit 8 KB");

    // w=4 with the full grid: the ring alone exceeds the budget, and the
    // 256-sample complex spectrum scratch appears on top.
    let full_subset = FeatureSubset::new(
        crate::features::descriptor_grid(&Channel::ALL, &FeatureKind::ALL).unwrap(),
    );
    let config = StreamConfig::new(4, 64, 32, full_subset);
    let model = small_protonn(90, 5, 8);
    let report = budget_check(&config, &model);
    assert_eq!(report.ring_bytes, 256 * 9 * 4);
    assert!(report.feature_scratch_bytes >= 256 * 8);
    assert!(!report.fits, "w=4 full-grid config must be flagged");
}

#[test]
fn detection_latency_handles_misses() {
    let events = vec![StreamEvent {
        kind: EventKind::Prediction,
        start_ms: 1000,
        end_ms: 2000,
        fog: true,
        scores: [0.0, 1.0],
        feature_us: 0.0,
        inference_us: 0.0,
    }];
    let episodes = vec![
        Episode {
            subject: SubjectId(1),
            start_ms: 1500,
            len_samples: 64,
            duration_s: 1.0,
        },
        Episode {
            subject: SubjectId(1),
            start_ms: 50_000,
            len_samples: 64,
            duration_s: 1.0,
        },
    ];
    let report = detection_latency(&events, &episodes, 64);
    assert_eq!(report.detected, 1);
    assert_eq!(report.missed, 1);
    assert_eq!(report.miss_rate, 0.5);
    assert_eq!(report.per_episode[0].delay_ms, Some(500));
    assert_eq!(report.per_episode[1].delay_ms, None);

    let all_missed = detection_latency(&[], &episodes, 64);
    assert_eq!(all_missed.miss_rate, 1.0);
    assert!(all_missed.mean_delay_ms.is_none());
    assert!(all_missed.median_delay_ms.is_none());
}

#[test]
fn events_jsonl_one_object_per_line() {
    let rec = synthetic_recording(&[(64 * 10, Label::Normal), (64 * 4, Label::Fog)]);
    let config = StreamConfig::new(1, 64, 32, freeze_index_subset());
    let result = run_stream(&[rec], &config, &stump_model()).unwrap();
    let jsonl = result.events_jsonl();
    let lines: Vec<&str> = jsonl.lines().collect();
    assert_eq!(lines.len(), result.events.len());
    for line in lines {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v.get("kind").is_some());
    }
}
