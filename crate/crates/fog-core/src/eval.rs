//! Metrics and the experiment harness: cross-validated model evaluation,
//! the size/recall sweep, the feature-subset latency bench and the sensor
//! ablation. Feature selection and normalization are fit inside each
//! training fold only.
//!
//! Reports are deterministic under a fixed config and seed in every field
//! except the `timing` section, which necessarily reflects wall-clock
//! measurements; the config hash covers the config alone.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::features::{
    descriptor_grid, extract_matrix_for, make_windows, select_features, Channel,
    ExtractionPlan, FeatureDescriptor, FeatureExtractor, FeatureMatrix, FeatureSubset,
    LabelRule, NormStats, Sensor, WindowParams, WindowView, DEFAULT_CORR_THRESHOLD,
};
use crate::ingest::{stratified_kfold, stratified_split, Segment, SubjectId};
use crate::model::{AnyModel, ModelFamily};
use crate::protonn::{self, ProtoNnHyper};
use crate::trees::{train_forest, train_tree, DEFAULT_FOREST_TREES};

/// Default selected-subset sizes (validation-recall plateau on the
/// reference corpus).
pub const DEFAULT_SELECTED_FULL: usize = 20;
pub const DEFAULT_SELECTED_TIME: usize = 16;

/// Binary confusion counts with FoG as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn add(&mut self, other: &ConfusionCounts) {
        self.tp += other.tp;
        self.tn += other.tn;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }

    /// Recall of the FoG class; `None` when no FoG windows exist.
    pub fn sensitivity(&self) -> Option<f64> {
        let denom = self.tp + self.fn_;
        (denom > 0).then(|| self.tp as f64 / denom as f64)
    }

    /// Recall of the Normal class; `None` when no Normal windows exist.
    pub fn specificity(&self) -> Option<f64> {
        let denom = self.tn + self.fp;
        (denom > 0).then(|| self.tn as f64 / denom as f64)
    }

    /// Unweighted mean of sensitivity and specificity.
    pub fn average_recall(&self) -> Option<f64> {
        Some((self.sensitivity()? + self.specificity()?) / 2.0)
    }
}

/// Count prediction outcomes against ground truth.
pub fn confusion(predictions: &[bool], labels: &[bool]) -> Result<ConfusionCounts> {
    if predictions.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: labels.len(),
            actual: predictions.len(),
        });
    }
    let mut c = ConfusionCounts::default();
    for (&pred, &truth) in predictions.iter().zip(labels) {
        match (pred, truth) {
            (true, true) => c.tp += 1,
            (false, false) => c.tn += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// Which feature columns a model trains on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum FeatureSpec {
    /// Full channel x kind grid (90 columns on all sensors).
    FullGrid,
    /// Time-domain kinds only (45 columns on all sensors).
    TimeDomain,
    /// Data-driven subset of the full grid, fit per training fold.
    SelectedFromFull { count: usize },
    /// Data-driven subset of the time-domain grid, fit per training fold.
    SelectedFromTime { count: usize },
    /// Pinned descriptor list.
    Manifest { descriptors: Vec<String> },
}

impl FeatureSpec {
    fn selection_count(&self) -> Option<usize> {
        match self {
            FeatureSpec::SelectedFromFull { count } | FeatureSpec::SelectedFromTime { count } => {
                Some(*count)
            }
            _ => None,
        }
    }

    /// The candidate descriptor pool this spec draws from.
    pub fn candidate_descriptors(&self, channels: &[Channel]) -> Result<Vec<FeatureDescriptor>> {
        use crate::features::FeatureKind;
        match self {
            FeatureSpec::FullGrid | FeatureSpec::SelectedFromFull { .. } => {
                descriptor_grid(channels, &FeatureKind::ALL)
            }
            FeatureSpec::TimeDomain | FeatureSpec::SelectedFromTime { .. } => {
                descriptor_grid(channels, &FeatureKind::TIME_DOMAIN)
            }
            FeatureSpec::Manifest { descriptors } => descriptors
                .iter()
                .map(|s| s.parse::<FeatureDescriptor>())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Protocol {
    /// Stratified k-fold cross-validation (the table-reproduction default).
    CrossValidation { folds: usize },
    /// One stratified split; `ratio` is the training fraction.
    Split { ratio: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeHyper {
    pub max_depth: usize,
    pub min_leaf: usize,
}

impl Default for TreeHyper {
    fn default() -> Self {
        TreeHyper {
            max_depth: 24,
            min_leaf: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestHyper {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Per-tree feature fraction; `None` means sqrt(D)/D.
    pub feature_frac: Option<f64>,
}

impl Default for ForestHyper {
    fn default() -> Self {
        ForestHyper {
            n_trees: DEFAULT_FOREST_TREES,
            max_depth: 24,
            min_leaf: 1,
            feature_frac: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub family: ModelFamily,
    pub window_secs: u32,
    pub fs: u32,
    pub stride: u32,
    pub channels: Vec<Channel>,
    pub feature_spec: FeatureSpec,
    pub protocol: Protocol,
    pub seed: u64,
    pub protonn: ProtoNnHyper,
    pub tree: TreeHyper,
    pub forest: ForestHyper,
}

impl ExperimentConfig {
    pub fn new(family: ModelFamily, window_secs: u32) -> ExperimentConfig {
        ExperimentConfig {
            family,
            window_secs,
            fs: crate::ingest::SAMPLE_RATE_HZ,
            stride: 32,
            channels: Channel::ALL.to_vec(),
            feature_spec: FeatureSpec::FullGrid,
            protocol: Protocol::CrossValidation { folds: 10 },
            seed: 42,
            protonn: ProtoNnHyper::default(),
            tree: TreeHyper::default(),
            forest: ForestHyper::default(),
        }
    }

    pub fn window_params(&self) -> WindowParams {
        WindowParams::new(self.window_secs, self.fs, self.stride)
    }

    pub fn validate(&self) -> Result<()> {
        self.window_params().validate()?;
        if self.channels.is_empty() {
            return Err(Error::Config {
                field: "channels".into(),
                message: "channel subset must be nonempty".into(),
            });
        }
        match self.protocol {
            Protocol::CrossValidation { folds } if folds < 2 => {
                return Err(Error::Config {
                    field: "folds".into(),
                    message: "need at least 2 folds".into(),
                });
            }
            Protocol::Split { ratio } if !(ratio > 0.0 && ratio < 1.0) => {
                return Err(Error::Config {
                    field: "ratio".into(),
                    message: format!("must satisfy 0 < ratio < 1, got {ratio}"),
                });
            }
            _ => {}
        }
        if let Some(count) = self.feature_spec.selection_count() {
            if count == 0 {
                return Err(Error::Config {
                    field: "feature_spec.count".into(),
                    message: "selected feature count must be positive".into(),
                });
            }
        }
        if let Some(frac) = self.forest.feature_frac {
            if !(frac > 0.0 && frac <= 1.0) {
                return Err(Error::Config {
                    field: "forest.feature_frac".into(),
                    message: format!("must be in (0, 1], got {frac}"),
                });
            }
        }
        Ok(())
    }

    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex(&Sha256::digest(json.as_bytes()))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TimingStats {
    pub mean_us: f64,
    pub p95_us: f64,
    pub max_us: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub feature: TimingStats,
    pub inference: TimingStats,
    pub windows_timed: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub counts: ConfusionCounts,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub average_recall: Option<f64>,
    pub model_size_bytes: usize,
    pub selected_features: Vec<String>,
    pub norm_stats_digest: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubjectReport {
    pub subject: u8,
    pub counts: ConfusionCounts,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub dataset_digest: String,
    pub n_windows: usize,
    pub n_fog_windows: usize,
    pub counts: ConfusionCounts,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub average_recall: Option<f64>,
    /// Median over folds.
    pub model_size_bytes: usize,
    pub folds: Vec<FoldReport>,
    pub per_subject: Vec<SubjectReport>,
    /// Wall-clock measurements; excluded from the determinism contract.
    pub timing: TimingReport,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(s: &str) -> Result<EvalReport> {
        serde_json::from_str(s).map_err(|e| Error::Data(format!("report json: {e}")))
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// SHA-256 over segment content (subjects, timestamps, samples, labels).
pub fn dataset_digest(segments: &[Segment]) -> String {
    let mut h = Sha256::new();
    for seg in segments {
        h.update([seg.subject.0]);
        h.update((seg.len() as u64).to_le_bytes());
        for ts in &seg.timestamps {
            h.update(ts.to_le_bytes());
        }
        for channel in &seg.channels {
            for v in channel {
                h.update(v.to_le_bytes());
            }
        }
        for &fog in &seg.fog {
            h.update([fog as u8]);
        }
    }
    hex(&h.finalize())
}

fn norm_stats_digest(stats: &NormStats) -> String {
    let mut h = Sha256::new();
    for v in stats.mean.iter().chain(stats.std.iter()) {
        h.update(v.to_le_bytes());
    }
    hex(&h.finalize())
}

/// Fit (optional) selection on the training rows only, then train one model.
fn fit_fold(
    full: &FeatureMatrix,
    train_rows: &[usize],
    cfg: &ExperimentConfig,
    fold: usize,
) -> Result<(AnyModel, Vec<usize>, FeatureSubset, NormStats)> {
    let train_full = full.select_rows(train_rows);
    let (train_matrix, columns, subset) = match cfg.feature_spec.selection_count() {
        Some(count) => {
            let outcome = select_features(&train_full, count, DEFAULT_CORR_THRESHOLD)?;
            let columns = full.column_positions(&outcome.subset.descriptors)?;
            (train_full.select_columns(&columns), columns, outcome.subset)
        }
        None => {
            let columns: Vec<usize> = (0..full.n_cols()).collect();
            let subset = FeatureSubset::new(full.descriptors().to_vec());
            (train_full, columns, subset)
        }
    };
    let stats = NormStats::fit(&train_matrix);

    let model = match cfg.family {
        ModelFamily::ProtoNn => {
            let hyper = ProtoNnHyper {
                seed: cfg.protonn.seed.wrapping_add(fold as u64),
                ..cfg.protonn.clone()
            };
            AnyModel::ProtoNn(protonn::train(&train_matrix, &hyper, subset.digest())?.model)
        }
        ModelFamily::DecisionTree => AnyModel::Tree(train_tree(
            &train_matrix,
            cfg.tree.max_depth,
            cfg.tree.min_leaf,
        )?),
        ModelFamily::RandomForest => {
            let d = train_matrix.n_cols();
            let frac = cfg
                .forest
                .feature_frac
                .unwrap_or((d as f64).sqrt() / d as f64);
            AnyModel::Forest(train_forest(
                &train_matrix,
                cfg.forest.n_trees,
                cfg.forest.max_depth,
                cfg.forest.min_leaf,
                frac,
                cfg.seed.wrapping_add(fold as u64),
            )?)
        }
    };
    Ok((model, columns, subset, stats))
}

fn predict_rows(
    model: &AnyModel,
    full: &FeatureMatrix,
    columns: &[usize],
    rows: &[usize],
) -> Result<Vec<bool>> {
    let mut x = vec![0.0f64; columns.len()];
    let mut out = Vec::with_capacity(rows.len());
    for &r in rows {
        let row = full.row(r);
        for (slot, &c) in x.iter_mut().zip(columns) {
            *slot = row[c];
        }
        out.push(model.predict_fog(&x)?);
    }
    Ok(out)
}

fn timing_stats(mut samples: Vec<f64>) -> TimingStats {
    if samples.is_empty() {
        return TimingStats::default();
    }
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let p95 = samples[((samples.len() as f64 * 0.95) as usize).min(samples.len() - 1)];
    TimingStats {
        mean_us: mean,
        p95_us: p95,
        max_us: *samples.last().unwrap(),
    }
}

/// Median-of-5-runs per-window wall time for one extraction plan (run 0 is
/// warmup; per-window percentiles come from the middle run).
fn time_extraction(
    segments: &[Segment],
    windows: &[crate::features::WindowIndex],
    params: &WindowParams,
    plan: &ExtractionPlan,
) -> Result<TimingStats> {
    let n = params.window_samples();
    let mut extractor = FeatureExtractor::new(n, params.fs);
    let mut row = vec![0.0f64; plan.n_features()];
    let mut per_window = vec![0.0f64; windows.len()];
    let mut run_means = Vec::with_capacity(5);
    for run in 0..6 {
        let start = Instant::now();
        for (i, w) in windows.iter().enumerate() {
            let view = WindowView::new(segments, w, n);
            if run == 3 {
                let t = Instant::now();
                extractor.extract_into(plan, &view, &mut row)?;
                per_window[i] = t.elapsed().as_nanos() as f64 / 1000.0;
            } else {
                extractor.extract_into(plan, &view, &mut row)?;
            }
        }
        if run > 0 {
            run_means.push(start.elapsed().as_nanos() as f64 / 1000.0 / windows.len() as f64);
        }
    }
    run_means.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut stats = timing_stats(per_window);
    stats.mean_us = run_means[run_means.len() / 2];
    Ok(stats)
}

/// Run one configured experiment end to end.
pub fn run_experiment(segments: &[Segment], cfg: &ExperimentConfig) -> Result<EvalReport> {
    cfg.validate()?;
    let params = cfg.window_params();
    let windows = make_windows(segments, &params, LabelRule::Majority)?;
    if windows.is_empty() {
        return Err(Error::Data("no windows produced from the dataset".into()));
    }
    let descriptors = cfg.feature_spec.candidate_descriptors(&cfg.channels)?;
    let full = extract_matrix_for(segments, &windows, &params, &descriptors)?;
    let labels = full.labels().to_vec();

    let fold_rows: Vec<(Vec<usize>, Vec<usize>)> = match cfg.protocol {
        Protocol::CrossValidation { folds } => stratified_kfold(&labels, folds, cfg.seed)?,
        Protocol::Split { ratio } => vec![stratified_split(&labels, ratio, cfg.seed)?],
    };

    struct FoldOutcome {
        report: FoldReport,
        predictions: Vec<(usize, bool)>,
        model: AnyModel,
        columns: Vec<usize>,
    }

    let outcomes: Vec<Result<FoldOutcome>> = fold_rows
        .par_iter()
        .enumerate()
        .map(|(fold, (train_rows, val_rows))| {
            let (model, columns, subset, stats) = fit_fold(&full, train_rows, cfg, fold)?;
            let preds = predict_rows(&model, &full, &columns, val_rows)?;
            let truth: Vec<bool> = val_rows.iter().map(|&r| labels[r]).collect();
            let counts = confusion(&preds, &truth)?;
            Ok(FoldOutcome {
                report: FoldReport {
                    fold,
                    counts,
                    sensitivity: counts.sensitivity(),
                    specificity: counts.specificity(),
                    average_recall: counts.average_recall(),
                    model_size_bytes: model.size_bytes(),
                    selected_features: subset.descriptors.iter().map(|d| d.to_string()).collect(),
                    norm_stats_digest: norm_stats_digest(&stats),
                },
                predictions: val_rows.iter().copied().zip(preds).collect(),
                model,
                columns,
            })
        })
        .collect();

    let mut folds = Vec::with_capacity(outcomes.len());
    let mut pooled = ConfusionCounts::default();
    let mut window_preds: Vec<(usize, bool)> = Vec::new();
    let mut first: Option<(AnyModel, Vec<usize>, Vec<usize>)> = None;
    for (outcome, (_, val_rows)) in outcomes.into_iter().zip(&fold_rows) {
        let outcome = outcome?;
        pooled.add(&outcome.report.counts);
        window_preds.extend_from_slice(&outcome.predictions);
        if first.is_none() {
            first = Some((outcome.model, outcome.columns, val_rows.clone()));
        }
        folds.push(outcome.report);
    }

    // Per-subject breakdown over every validation prediction.
    let subject_ids: Vec<SubjectId> = windows.iter().map(|w| w.subject).collect();
    let mut present = subject_ids.clone();
    present.sort_unstable();
    present.dedup();
    let per_subject: Vec<SubjectReport> = present
        .iter()
        .map(|&s| {
            let mut c = ConfusionCounts::default();
            for &(row, pred) in &window_preds {
                if subject_ids[row] == s {
                    match (pred, labels[row]) {
                        (true, true) => c.tp += 1,
                        (false, false) => c.tn += 1,
                        (true, false) => c.fp += 1,
                        (false, true) => c.fn_ += 1,
                    }
                }
            }
            SubjectReport {
                subject: s.0,
                counts: c,
                sensitivity: c.sensitivity(),
                specificity: c.specificity(),
            }
        })
        .collect();

    let mut sizes: Vec<usize> = folds.iter().map(|f| f.model_size_bytes).collect();
    sizes.sort_unstable();
    let model_size_bytes = sizes[sizes.len() / 2];

    // Timing pass: fold-0 plan and model over a capped window sample.
    let (model0, columns0, val0) = first.expect("at least one fold");
    let timed: Vec<crate::features::WindowIndex> = {
        let cap = 2000.min(windows.len());
        let step = (windows.len() / cap).max(1);
        windows.iter().step_by(step).take(cap).copied().collect()
    };
    let plan_descriptors: Vec<FeatureDescriptor> =
        columns0.iter().map(|&c| full.descriptors()[c]).collect();
    let plan = ExtractionPlan::new(&plan_descriptors)?;
    let feature_timing = time_extraction(segments, &timed, &params, &plan)?;

    let mut inference_samples = Vec::new();
    let mut x = vec![0.0f64; columns0.len()];
    for &r in val0.iter().take(2000) {
        let row = full.row(r);
        for (slot, &c) in x.iter_mut().zip(&columns0) {
            *slot = row[c];
        }
        let t = Instant::now();
        let _ = model0.predict_fog(&x)?;
        inference_samples.push(t.elapsed().as_nanos() as f64 / 1000.0);
    }

    let n_fog = labels.iter().filter(|&&b| b).count();
    Ok(EvalReport {
        config: cfg.clone(),
        config_hash: cfg.hash(),
        dataset_digest: dataset_digest(segments),
        n_windows: windows.len(),
        n_fog_windows: n_fog,
        counts: pooled,
        sensitivity: pooled.sensitivity(),
        specificity: pooled.specificity(),
        average_recall: pooled.average_recall(),
        model_size_bytes,
        folds,
        per_subject,
        timing: TimingReport {
            feature: feature_timing,
            inference: timing_stats(inference_samples),
            windows_timed: timed.len(),
        },
    })
}

/// One row of the size/recall curve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SizeRecallRow {
    pub family: ModelFamily,
    pub target_bytes: usize,
    pub achieved_bytes: usize,
    pub sensitivity: f64,
    pub specificity: f64,
    pub avg_recall: f64,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SizeRecallTable {
    pub rows: Vec<SizeRecallRow>,
    pub warnings: Vec<String>,
}

impl SizeRecallTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "family,target_bytes,achieved_bytes,sensitivity,specificity,avg_recall,detail\n",
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{:.6},{:.6},{:.6},\"{}\"\n",
                r.family.name(),
                r.target_bytes,
                r.achieved_bytes,
                r.sensitivity,
                r.specificity,
                r.avg_recall,
                r.detail
            ));
        }
        out
    }

    pub fn best_at(&self, family: ModelFamily, target: usize) -> Option<&SizeRecallRow> {
        self.rows
            .iter()
            .filter(|r| r.family == family && r.target_bytes == target)
            .max_by(|a, b| a.avg_recall.partial_cmp(&b.avg_recall).unwrap())
    }
}

/// Size/recall sweep for the prototype model and the depth-pruned tree on a
/// stratified 70/30 split of the configured windows.
pub fn size_recall_sweep(
    segments: &[Segment],
    cfg: &ExperimentConfig,
    size_grid: &[usize],
) -> Result<SizeRecallTable> {
    if size_grid.is_empty() {
        return Ok(SizeRecallTable {
            rows: Vec::new(),
            warnings: Vec::new(),
        });
    }
    cfg.validate()?;
    let params = cfg.window_params();
    let windows = make_windows(segments, &params, LabelRule::Majority)?;
    let descriptors = cfg.feature_spec.candidate_descriptors(&cfg.channels)?;
    let full = extract_matrix_for(segments, &windows, &params, &descriptors)?;
    let (train_rows, val_rows) = stratified_split(full.labels(), 0.7, cfg.seed)?;

    // Selection (when configured) is fit on the training side only.
    let train_full = full.select_rows(&train_rows);
    let (train_m, val_m, subset) = match cfg.feature_spec.selection_count() {
        Some(count) => {
            let outcome = select_features(&train_full, count, DEFAULT_CORR_THRESHOLD)?;
            let columns = full.column_positions(&outcome.subset.descriptors)?;
            (
                train_full.select_columns(&columns),
                full.select_rows(&val_rows).select_columns(&columns),
                outcome.subset,
            )
        }
        None => (
            train_full,
            full.select_rows(&val_rows),
            FeatureSubset::new(full.descriptors().to_vec()),
        ),
    };

    let mut rows = Vec::new();
    let sweep =
        protonn::compress_sweep(&train_m, &val_m, &cfg.protonn, size_grid, subset.digest())?;
    let mut warnings = sweep.warnings;
    for p in sweep.points {
        rows.push(SizeRecallRow {
            family: ModelFamily::ProtoNn,
            target_bytes: p.target_bytes,
            achieved_bytes: p.achieved_bytes,
            sensitivity: p.sensitivity,
            specificity: p.specificity,
            avg_recall: p.avg_recall,
            detail: format!(
                "proj_dim={} prototypes={} budget_projection={:?}",
                p.hyper.proj_dim, p.hyper.n_prototypes, p.hyper.budget_projection
            ),
        });
    }

    // Tree grid: train each (depth, min_leaf) once, then pick per target.
    const DEPTHS: [usize; 9] = [1, 2, 3, 4, 5, 6, 8, 10, 12];
    const MIN_LEAVES: [usize; 3] = [1, 10, 50];
    let combos: Vec<(usize, usize)> = DEPTHS
        .iter()
        .flat_map(|&d| MIN_LEAVES.iter().map(move |&l| (d, l)))
        .collect();
    let trained: Vec<Result<(usize, f64, f64, f64, (usize, usize))>> = combos
        .par_iter()
        .map(|&(depth, leaf)| {
            let tree = train_tree(&train_m, depth, leaf)?;
            let preds: Vec<bool> = (0..val_m.n_rows())
                .map(|i| tree.predict_fog(val_m.row(i)))
                .collect::<Result<_>>()?;
            let c = confusion(&preds, val_m.labels())?;
            Ok((
                tree.size_bytes(),
                c.sensitivity().unwrap_or(0.0),
                c.specificity().unwrap_or(0.0),
                c.average_recall().unwrap_or(0.0),
                (depth, leaf),
            ))
        })
        .collect();
    let trained: Vec<_> = trained.into_iter().collect::<Result<_>>()?;
    for &target in size_grid {
        let best = trained
            .iter()
            .filter(|(size, ..)| *size <= target)
            .max_by(|a, b| a.3.partial_cmp(&b.3).unwrap());
        match best {
            Some(&(size, sens, spec, avg, (depth, leaf))) => rows.push(SizeRecallRow {
                family: ModelFamily::DecisionTree,
                target_bytes: target,
                achieved_bytes: size,
                sensitivity: sens,
                specificity: spec,
                avg_recall: avg,
                detail: format!("max_depth={depth} min_leaf={leaf}"),
            }),
            None => warnings.push(format!(
                "no decision tree fits the {target} B target; skipped"
            )),
        }
    }
    Ok(SizeRecallTable { rows, warnings })
}

/// Per-window extraction cost of the selected full-grid subset vs the
/// selected time-domain subset at one window length.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LatencyRow {
    pub window_secs: u32,
    pub windows_timed: usize,
    pub full_subset_us: f64,
    pub time_subset_us: f64,
    pub ratio: f64,
    pub full_subset_len: usize,
    pub time_subset_len: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LatencyTable {
    pub rows: Vec<LatencyRow>,
}

impl LatencyTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "window_secs,windows_timed,full_subset_us,time_subset_us,ratio,full_subset_len,time_subset_len\n",
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{:.3},{:.3},{:.3},{},{}\n",
                r.window_secs,
                r.windows_timed,
                r.full_subset_us,
                r.time_subset_us,
                r.ratio,
                r.full_subset_len,
                r.time_subset_len
            ));
        }
        out
    }
}

/// Benchmark the two deployed feature subsets across window lengths.
/// Subsets are fit on a stratified 70% training side at each length.
pub fn feature_latency_bench(
    segments: &[Segment],
    cfg: &ExperimentConfig,
    window_lengths: &[u32],
) -> Result<LatencyTable> {
    let mut rows = Vec::new();
    for &w in window_lengths {
        let params = WindowParams::new(w, cfg.fs, cfg.stride);
        let windows = make_windows(segments, &params, LabelRule::Majority)?;
        if windows.is_empty() {
            continue;
        }
        let cap = 2000.min(windows.len());
        let step = (windows.len() / cap).max(1);
        let timed: Vec<crate::features::WindowIndex> =
            windows.iter().step_by(step).take(cap).copied().collect();

        let mut subsets = Vec::new();
        for (spec, count) in [
            (
                FeatureSpec::SelectedFromFull {
                    count: DEFAULT_SELECTED_FULL,
                },
                DEFAULT_SELECTED_FULL,
            ),
            (
                FeatureSpec::SelectedFromTime {
                    count: DEFAULT_SELECTED_TIME,
                },
                DEFAULT_SELECTED_TIME,
            ),
        ] {
            let candidates = spec.candidate_descriptors(&cfg.channels)?;
            let matrix = extract_matrix_for(segments, &windows, &params, &candidates)?;
            let (train_rows, _) = stratified_split(matrix.labels(), 0.7, cfg.seed)?;
            let outcome = select_features(
                &matrix.select_rows(&train_rows),
                count,
                DEFAULT_CORR_THRESHOLD,
            )?;
            subsets.push(outcome.subset);
        }

        let full_plan = ExtractionPlan::new(&subsets[0].descriptors)?;
        let time_plan = ExtractionPlan::new(&subsets[1].descriptors)?;
        let full_t = time_extraction(segments, &timed, &params, &full_plan)?;
        let time_t = time_extraction(segments, &timed, &params, &time_plan)?;
        rows.push(LatencyRow {
            window_secs: w,
            windows_timed: timed.len(),
            full_subset_us: full_t.mean_us,
            time_subset_us: time_t.mean_us,
            ratio: full_t.mean_us / time_t.mean_us,
            full_subset_len: subsets[0].len(),
            time_subset_len: subsets[1].len(),
        });
    }
    Ok(LatencyTable { rows })
}

/// One sensor-subset evaluation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationRow {
    pub sensors: Vec<Sensor>,
    pub label: String,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub average_recall: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn row(&self, sensors: &[Sensor]) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.sensors == sensors)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("sensors,sensitivity,specificity,avg_recall\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{:.6},{:.6},{:.6}\n",
                r.label,
                r.sensitivity.unwrap_or(f64::NAN),
                r.specificity.unwrap_or(f64::NAN),
                r.average_recall.unwrap_or(f64::NAN)
            ));
        }
        out
    }
}

/// Evaluate every nonempty subset of {Ankle, Leg, Torso} under the given
/// config (the channel list is overridden per subset).
pub fn sensor_ablation(segments: &[Segment], cfg: &ExperimentConfig) -> Result<AblationTable> {
    const SUBSETS: [&[Sensor]; 7] = [
        &[Sensor::Ankle],
        &[Sensor::Leg],
        &[Sensor::Torso],
        &[Sensor::Ankle, Sensor::Leg],
        &[Sensor::Ankle, Sensor::Torso],
        &[Sensor::Leg, Sensor::Torso],
        &[Sensor::Ankle, Sensor::Leg, Sensor::Torso],
    ];
    let mut rows = Vec::new();
    for sensors in SUBSETS {
        let mut sub_cfg = cfg.clone();
        sub_cfg.channels = sensors.iter().flat_map(|s| s.channels()).collect();
        let report = run_experiment(segments, &sub_cfg)?;
        rows.push(AblationRow {
            sensors: sensors.to_vec(),
            label: sensors
                .iter()
                .map(|s| s.short_name())
                .collect::<Vec<_>>()
                .join("+"),
            sensitivity: report.sensitivity,
            specificity: report.specificity,
            average_recall: report.average_recall,
        });
    }
    Ok(AblationTable { rows })
}

#[cfg(test)]
mod tests;
