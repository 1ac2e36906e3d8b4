//! Data-driven feature-subset selection and column normalization.
//!
//! Selection ranks columns by mutual information with the binary label
//! (equal-width 16-bin discretization), then drops near-duplicates with a
//! Pearson-correlation filter. Both selection and normalization are fit on
//! training data only and applied unchanged elsewhere.

use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::features::{FeatureDescriptor, FeatureMatrix};

pub const DEFAULT_CORR_THRESHOLD: f64 = 0.95;
const MI_BINS: usize = 16;
const STD_FLOOR: f64 = 1e-9;

/// Ordered list of feature descriptors a model was trained on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSubset {
    pub descriptors: Vec<FeatureDescriptor>,
}

impl FeatureSubset {
    pub fn new(descriptors: Vec<FeatureDescriptor>) -> FeatureSubset {
        FeatureSubset { descriptors }
    }

    pub fn len(&self) -> usize {
        self.descriptors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.descriptors.is_empty()
    }

    /// Manifest text: one descriptor name per line.
    pub fn manifest_text(&self) -> String {
        let mut s = String::new();
        for d in &self.descriptors {
            s.push_str(&d.to_string());
            s.push('\n');
        }
        s
    }

    pub fn parse_manifest(reader: impl BufRead) -> Result<FeatureSubset> {
        let mut descriptors = Vec::new();
        for line in reader.lines() {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            descriptors.push(FeatureDescriptor::from_str(trimmed)?);
        }
        if descriptors.is_empty() {
            return Err(Error::Data("empty feature manifest".into()));
        }
        Ok(FeatureSubset { descriptors })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.manifest_text().as_bytes())?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<FeatureSubset> {
        let f = std::fs::File::open(path)?;
        Self::parse_manifest(std::io::BufReader::new(f))
    }

    /// SHA-256 of the manifest text; pins a model to its input schema.
    pub fn digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(self.manifest_text().as_bytes());
        h.finalize().into()
    }
}

/// Result of [`select_features`], including the audit trail.
#[derive(Debug, Clone)]
pub struct SelectionOutcome {
    pub subset: FeatureSubset,
    /// (descriptor, mutual information) in rank order, before filtering.
    pub ranking: Vec<(FeatureDescriptor, f64)>,
    pub dropped_zero_variance: Vec<FeatureDescriptor>,
    pub dropped_correlated: Vec<FeatureDescriptor>,
    /// Set when fewer than `target_count` columns survived.
    pub truncated: bool,
}

struct ColumnStats {
    mean: f64,
    std: f64,
    min: f64,
    max: f64,
}

fn column_stats(matrix: &FeatureMatrix, col: usize) -> ColumnStats {
    let n = matrix.n_rows() as f64;
    let mut sum = 0.0;
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for r in 0..matrix.n_rows() {
        let v = matrix.value(r, col);
        sum += v;
        min = min.min(v);
        max = max.max(v);
    }
    let mean = sum / n;
    let mut var = 0.0;
    for r in 0..matrix.n_rows() {
        let d = matrix.value(r, col) - mean;
        var += d * d;
    }
    ColumnStats {
        mean,
        std: (var / n).sqrt(),
        min,
        max,
    }
}

/// Mutual information (nats) between an equal-width-discretized column and
/// the binary label.
fn mutual_information(matrix: &FeatureMatrix, col: usize, stats: &ColumnStats) -> f64 {
    let n = matrix.n_rows();
    let span = stats.max - stats.min;
    debug_assert!(span > 0.0);
    let mut joint = [[0usize; 2]; MI_BINS];
    for r in 0..n {
        let v = matrix.value(r, col);
        let mut bin = (((v - stats.min) / span) * MI_BINS as f64) as usize;
        if bin >= MI_BINS {
            bin = MI_BINS - 1;
        }
        joint[bin][matrix.labels()[r] as usize] += 1;
    }
    let n = n as f64;
    let p_pos = matrix.labels().iter().filter(|&&b| b).count() as f64 / n;
    let p_label = [1.0 - p_pos, p_pos];
    let mut mi = 0.0;
    for row in &joint {
        let p_bin = (row[0] + row[1]) as f64 / n;
        if p_bin == 0.0 {
            continue;
        }
        for l in 0..2 {
            let p = row[l] as f64 / n;
            if p > 0.0 && p_label[l] > 0.0 {
                mi += p * (p / (p_bin * p_label[l])).ln();
            }
        }
    }
    mi.max(0.0)
}

fn pearson(matrix: &FeatureMatrix, a: usize, b: usize, sa: &ColumnStats, sb: &ColumnStats) -> f64 {
    let n = matrix.n_rows() as f64;
    let mut cov = 0.0;
    for r in 0..matrix.n_rows() {
        cov += (matrix.value(r, a) - sa.mean) * (matrix.value(r, b) - sb.mean);
    }
    cov / (n * sa.std * sb.std)
}

/// Pick the `target_count` most label-informative, mutually non-redundant
/// columns of a training matrix.
///
/// Never sees test data: callers fit on the training rows only.
pub fn select_features(
    matrix: &FeatureMatrix,
    target_count: usize,
    corr_threshold: f64,
) -> Result<SelectionOutcome> {
    if target_count == 0 {
        return Err(Error::Config {
            field: "target_count".into(),
            message: "must be positive".into(),
        });
    }
    if matrix.n_rows() == 0 {
        return Err(Error::Data("cannot select features from an empty matrix".into()));
    }
    let stats: Vec<ColumnStats> = (0..matrix.n_cols())
        .map(|c| column_stats(matrix, c))
        .collect();

    let mut dropped_zero_variance = Vec::new();
    let mut candidates = Vec::new();
    for c in 0..matrix.n_cols() {
        if stats[c].std <= 0.0 || stats[c].max == stats[c].min {
            dropped_zero_variance.push(matrix.descriptors()[c]);
        } else {
            candidates.push(c);
        }
    }

    let mut ranked: Vec<(usize, f64)> = candidates
        .iter()
        .map(|&c| (c, mutual_information(matrix, c, &stats[c])))
        .collect();
    // Stable order: by MI descending, column index breaking ties.
    ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));

    let ranking = ranked
        .iter()
        .map(|&(c, mi)| (matrix.descriptors()[c], mi))
        .collect();

    let mut kept: Vec<usize> = Vec::new();
    let mut dropped_correlated = Vec::new();
    for &(c, _) in &ranked {
        if kept.len() == target_count {
            break;
        }
        let redundant = kept.iter().any(|&k| {
            pearson(matrix, c, k, &stats[c], &stats[k]).abs() > corr_threshold
        });
        if redundant {
            dropped_correlated.push(matrix.descriptors()[c]);
        } else {
            kept.push(c);
        }
    }

    let truncated = kept.len() < target_count;
    Ok(SelectionOutcome {
        subset: FeatureSubset::new(kept.iter().map(|&c| matrix.descriptors()[c]).collect()),
        ranking,
        dropped_zero_variance,
        dropped_correlated,
        truncated,
    })
}

/// Per-column z-scoring statistics fitted on training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    /// Fit per-column mean and population std, flooring std at 1e-9.
    pub fn fit(matrix: &FeatureMatrix) -> NormStats {
        let mut mean = Vec::with_capacity(matrix.n_cols());
        let mut std = Vec::with_capacity(matrix.n_cols());
        for c in 0..matrix.n_cols() {
            let s = column_stats(matrix, c);
            mean.push(s.mean);
            std.push(s.std.max(STD_FLOOR));
        }
        NormStats { mean, std }
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    /// Z-score a matrix with these statistics.
    pub fn apply(&self, matrix: &FeatureMatrix) -> Result<FeatureMatrix> {
        if matrix.n_cols() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                actual: matrix.n_cols(),
            });
        }
        let c = matrix.n_cols();
        let mut values = Vec::with_capacity(matrix.values().len());
        for (i, &v) in matrix.values().iter().enumerate() {
            let col = i % c;
            values.push((v - self.mean[col]) / self.std[col]);
        }
        FeatureMatrix::new(
            matrix.descriptors().to_vec(),
            values,
            matrix.labels().to_vec(),
            matrix.subjects().to_vec(),
        )
    }

    /// Z-score one raw feature row in place.
    pub fn apply_row(&self, row: &mut [f64]) {
        debug_assert_eq!(row.len(), self.len());
        for (i, v) in row.iter_mut().enumerate() {
            *v = (*v - self.mean[i]) / self.std[i];
        }
    }

    /// Quantize to the f32 precision used by serialized models.
    pub fn to_f32(&self) -> (Vec<f32>, Vec<f32>) {
        (
            self.mean.iter().map(|&v| v as f32).collect(),
            self.std.iter().map(|&v| v as f32).collect(),
        )
    }
}

/// Fit stats on `matrix` and return the normalized copy alongside them.
pub fn normalize(matrix: &FeatureMatrix) -> (FeatureMatrix, NormStats) {
    let stats = NormStats::fit(matrix);
    let normalized = stats.apply(matrix).expect("self-fit stats always match");
    (normalized, stats)
}
