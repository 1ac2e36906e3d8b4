//! Development harness: prints the acceptance-relevant numbers for the
//! synthetic corpus so generator constants can be tuned.
//!
//! Usage: cargo run --release -p fog-core --example calibrate [quick|full|sweep|ablate|bench]

use fog_core::eval::{
    feature_latency_bench, run_experiment, sensor_ablation, size_recall_sweep, ExperimentConfig,
    FeatureSpec, Protocol,
};
use fog_core::ingest::{cohort_segments, episode_stats, fog_episodes, Cohort};
use fog_core::model::ModelFamily;
use fog_core::synth::{generate_corpus, SynthConfig};

fn main() {
    let mode = std::env::args().nth(1).unwrap_or_else(|| "quick".into());
    let start = std::time::Instant::now();

    let cfg = SynthConfig::default();
    let recordings = generate_corpus(&cfg);
    let episodes = fog_episodes(&recordings, cfg.fs);
    let stats = episode_stats(&episodes);
    println!(
        "corpus: {} recordings, {} episodes, duration mean {:.2}s std {:.2}s range [{:.2}, {:.2}]",
        recordings.len(),
        episodes.len(),
        stats.mean_s,
        stats.std_s,
        stats.min_s,
        stats.max_s
    );

    let cohort = Cohort::from_recordings(recordings, &[4, 10]);
    let segments = cohort_segments(&cohort);
    let total_s: f64 = segments.iter().map(|s| s.len() as f64 / 64.0).sum();
    println!(
        "segments: {} covering {:.0}s ({:.1}h) after binarization [gen {:.1}s]",
        segments.len(),
        total_s,
        total_s / 3600.0,
        start.elapsed().as_secs_f64()
    );

    let quick = |family: ModelFamily, w: u32, folds: usize, spec: FeatureSpec| {
        let mut c = ExperimentConfig::new(family, w);
        c.protocol = Protocol::CrossValidation { folds };
        c.feature_spec = spec;
        c
    };

    match mode.as_str() {
        "quick" => {
            for w in [1u32, 2, 4] {
                let t = std::time::Instant::now();
                let mut cfg = quick(ModelFamily::ProtoNn, w, 3, FeatureSpec::FullGrid);
                cfg.protonn.epochs = 40;
                let r = run_experiment(&segments, &cfg).unwrap();
                println!(
                    "protonn w={w} (3-fold, 40ep): spec {:.2}% sens {:.2}% avg {:.2}% | {} windows ({} fog) [{:.0}s]",
                    100.0 * r.specificity.unwrap(),
                    100.0 * r.sensitivity.unwrap(),
                    100.0 * r.average_recall.unwrap(),
                    r.n_windows,
                    r.n_fog_windows,
                    t.elapsed().as_secs_f64()
                );
            }
            let t = std::time::Instant::now();
            let mut cfg = quick(ModelFamily::RandomForest, 4, 3, FeatureSpec::FullGrid);
            cfg.forest.n_trees = 21;
            let r = run_experiment(&segments, &cfg).unwrap();
            println!(
                "forest w=4 (3-fold, 21 trees): spec {:.2}% sens {:.2}% avg {:.2}% [{:.0}s]",
                100.0 * r.specificity.unwrap(),
                100.0 * r.sensitivity.unwrap(),
                100.0 * r.average_recall.unwrap(),
                t.elapsed().as_secs_f64()
            );
            let t = std::time::Instant::now();
            let mut cfg = quick(ModelFamily::DecisionTree, 2, 3, FeatureSpec::SelectedFromFull { count: 20 });
            cfg.tree.max_depth = 7;
            let r = run_experiment(&segments, &cfg).unwrap();
            println!(
                "tree w=2 depth7 F_d (3-fold): spec {:.2}% sens {:.2}% avg {:.2}% size {} B [{:.0}s]",
                100.0 * r.specificity.unwrap(),
                100.0 * r.sensitivity.unwrap(),
                100.0 * r.average_recall.unwrap(),
                r.model_size_bytes,
                t.elapsed().as_secs_f64()
            );
        }
        "full" => {
            for w in [1u32, 2, 3, 4] {
                let t = std::time::Instant::now();
                let cfg = quick(ModelFamily::ProtoNn, w, 10, FeatureSpec::FullGrid);
                let r = run_experiment(&segments, &cfg).unwrap();
                println!(
                    "protonn w={w} (10-fold, default): spec {:.2}% sens {:.2}% avg {:.2}% [{:.0}s]",
                    100.0 * r.specificity.unwrap(),
                    100.0 * r.sensitivity.unwrap(),
                    100.0 * r.average_recall.unwrap(),
                    t.elapsed().as_secs_f64()
                );
            }
            let t = std::time::Instant::now();
            let cfg = quick(ModelFamily::RandomForest, 4, 10, FeatureSpec::FullGrid);
            let r = run_experiment(&segments, &cfg).unwrap();
            println!(
                "forest w=4 (10-fold, default): spec {:.2}% sens {:.2}% avg {:.2}% [{:.0}s]",
                100.0 * r.specificity.unwrap(),
                100.0 * r.sensitivity.unwrap(),
                100.0 * r.average_recall.unwrap(),
                t.elapsed().as_secs_f64()
            );
        }
        "sweep" => {
            let t = std::time::Instant::now();
            let mut cfg = quick(ModelFamily::ProtoNn, 2, 10, FeatureSpec::SelectedFromFull { count: 20 });
            cfg.protonn.epochs = 60;
            let table = size_recall_sweep(&segments, &cfg, &[1434, 3072, 8192, 32768]).unwrap();
            println!("{}", table.to_csv());
            for w in &table.warnings {
                println!("warning: {w}");
            }
            println!("[sweep {:.0}s]", t.elapsed().as_secs_f64());
        }
        "ablate" => {
            let t = std::time::Instant::now();
            let mut cfg = quick(ModelFamily::ProtoNn, 2, 5, FeatureSpec::FullGrid);
            cfg.protonn.epochs = 60;
            let table = sensor_ablation(&segments, &cfg).unwrap();
            println!("{}", table.to_csv());
            println!("[ablate {:.0}s]", t.elapsed().as_secs_f64());
        }
        "bench" => {
            let cfg = quick(ModelFamily::ProtoNn, 2, 5, FeatureSpec::FullGrid);
            let table = feature_latency_bench(&segments, &cfg, &[1, 2, 3, 4]).unwrap();
            println!("{}", table.to_csv());
        }
        other => eprintln!("unknown mode {other}"),
    }
    println!("total {:.0}s", start.elapsed().as_secs_f64());
}
