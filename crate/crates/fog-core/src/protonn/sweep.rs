//! Model-size sweep: for each serialized-size target, search the
//! (projection dimension, prototype count, nonzero budget) grid for the
//! configuration with the best validation average recall that still fits.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::protonn::train::{train, ProtoNnHyper, N_CLASSES};
use crate::protonn::{encoded_matrix_bytes, ProtoNnModel};

/// One operating point of the size/recall curve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepPoint {
    pub target_bytes: usize,
    pub achieved_bytes: usize,
    pub sensitivity: f64,
    pub specificity: f64,
    pub avg_recall: f64,
    pub hyper: ProtoNnHyper,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub points: Vec<SweepPoint>,
    pub warnings: Vec<String>,
}

/// Serialized model size implied by dims and budgets, before training.
/// Matches [`ProtoNnModel::size_bytes`] exactly as long as training leaves
/// at least `budget` (or all, when dense) entries nonzero.
fn predicted_size(input_dim: usize, proj_dim: usize, m: usize, hyper: &ProtoNnHyper) -> usize {
    let nnz = |slots: usize, budget: Option<usize>| budget.map_or(slots, |b| b.min(slots));
    17 + encoded_matrix_bytes(
        proj_dim * input_dim,
        nnz(proj_dim * input_dim, hyper.budget_projection),
    ) + encoded_matrix_bytes(proj_dim * m, nnz(proj_dim * m, hyper.budget_prototypes))
        + encoded_matrix_bytes(N_CLASSES * m, nnz(N_CLASSES * m, hyper.budget_scores))
        + 8 * input_dim
        + 32
}

/// Candidate hyperparameter sets whose predicted size fits the target.
fn candidates(input_dim: usize, target: usize, base: &ProtoNnHyper) -> Vec<ProtoNnHyper> {
    const PROJ_DIMS: [usize; 6] = [2, 3, 5, 8, 10, 15];
    const PROTO_COUNTS: [usize; 6] = [4, 6, 8, 12, 16, 20];

    let mut out = Vec::new();
    for &proj_dim in PROJ_DIMS.iter().filter(|&&d| d <= input_dim) {
        for &m in &PROTO_COUNTS {
            let mut hyper = base.clone();
            hyper.proj_dim = proj_dim;
            hyper.n_prototypes = m;
            hyper.budget_projection = None;
            hyper.budget_prototypes = None;
            hyper.budget_scores = None;
            if predicted_size(input_dim, proj_dim, m, &hyper) <= target {
                out.push(hyper);
                continue;
            }
            // Dense projection does not fit: spend what remains of the
            // budget on sparse projection entries (6 bytes each).
            let fixed = predicted_size(input_dim, proj_dim, m, &hyper)
                - encoded_matrix_bytes(proj_dim * input_dim, proj_dim * input_dim);
            let Some(room) = target.checked_sub(fixed + 5) else {
                continue;
            };
            let budget = (room / 6).min(proj_dim * input_dim);
            if budget < 2 * proj_dim {
                continue; // too sparse to be a useful projection
            }
            hyper.budget_projection = Some(budget);
            if predicted_size(input_dim, proj_dim, m, &hyper) <= target {
                out.push(hyper);
            }
        }
    }
    // Prefer higher-capacity candidates; cap the per-target grid.
    out.sort_by_key(|h| {
        std::cmp::Reverse(
            h.budget_projection.unwrap_or(h.proj_dim * input_dim) + h.proj_dim * h.n_prototypes,
        )
    });
    out.truncate(8);
    out
}

fn recall_on(model: &ProtoNnModel, val: &FeatureMatrix) -> Result<(f64, f64, f64)> {
    let (mut tp, mut tn, mut fp, mut fal_n) = (0u64, 0u64, 0u64, 0u64);
    for i in 0..val.n_rows() {
        let fog = model.predict_fog(val.row(i))?;
        match (fog, val.labels()[i]) {
            (true, true) => tp += 1,
            (false, false) => tn += 1,
            (true, false) => fp += 1,
            (false, true) => fal_n += 1,
        }
    }
    let sens = tp as f64 / (tp + fal_n).max(1) as f64;
    let spec = tn as f64 / (tn + fp).max(1) as f64;
    Ok((sens, spec, (sens + spec) / 2.0))
}

/// Sweep ascending size targets, training the candidate grid for each and
/// keeping the best validation average recall per target. Targets too small
/// for any representable model are skipped with a warning.
pub fn compress_sweep(
    train_matrix: &FeatureMatrix,
    val_matrix: &FeatureMatrix,
    base: &ProtoNnHyper,
    size_grid: &[usize],
    schema_digest: [u8; 32],
) -> Result<SweepOutcome> {
    if size_grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Config {
            field: "size_grid".into(),
            message: "size targets must be ascending".into(),
        });
    }
    let mut points = Vec::new();
    let mut warnings = Vec::new();
    for &target in size_grid {
        let grid = candidates(train_matrix.n_cols(), target, base);
        if grid.is_empty() {
            warnings.push(format!(
                "size target {target} B is below the minimum representable model; skipped"
            ));
            continue;
        }
        let results: Vec<Result<(ProtoNnModel, f64, f64, f64)>> = grid
            .par_iter()
            .map(|hyper| {
                let trained = train(train_matrix, hyper, schema_digest)?;
                let (sens, spec, avg) = recall_on(&trained.model, val_matrix)?;
                Ok((trained.model, sens, spec, avg))
            })
            .collect();
        let mut best: Option<(usize, f64)> = None;
        let mut evaluated = Vec::with_capacity(results.len());
        for (idx, res) in results.into_iter().enumerate() {
            let (model, sens, spec, avg) = res?;
            debug_assert!(model.size_bytes() <= target);
            if best.map_or(true, |(_, b)| avg > b) {
                best = Some((idx, avg));
            }
            evaluated.push((model, sens, spec, avg));
        }
        let (idx, _) = best.expect("nonempty grid");
        let (model, sens, spec, avg) = &evaluated[idx];
        points.push(SweepPoint {
            target_bytes: target,
            achieved_bytes: model.size_bytes(),
            sensitivity: *sens,
            specificity: *spec,
            avg_recall: *avg,
            hyper: grid[idx].clone(),
        });
    }
    Ok(SweepOutcome { points, warnings })
}
