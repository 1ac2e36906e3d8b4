//! Prototype-model training: seeded initialization (Gaussian projection,
//! per-class k-means prototypes, one-hot score matrix, median-heuristic
//! kernel width), then alternating mini-batch gradient descent over the
//! score, prototype and projection matrices with a hard-thresholding
//! projection onto each matrix's nonzero budget after its update phase.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, NormStats};
use crate::protonn::{hard_threshold, Mat32, ProtoNnModel};

/// Binary task: Normal vs FoG.
pub const N_CLASSES: usize = 2;

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtoNnHyper {
    /// Projection dimension (rows of the projection matrix).
    pub proj_dim: usize,
    pub n_prototypes: usize,
    /// Max nonzeros per matrix; `None` leaves the matrix dense.
    pub budget_projection: Option<usize>,
    pub budget_prototypes: Option<usize>,
    pub budget_scores: Option<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Learning-rate multiplier applied every `lr_decay_every` epochs.
    pub lr_decay: f64,
    pub lr_decay_every: usize,
    pub seed: u64,
    /// Weight samples by inverse class frequency.
    pub class_weighting: bool,
}

impl Default for ProtoNnHyper {
    fn default() -> Self {
        ProtoNnHyper {
            proj_dim: 10,
            n_prototypes: 20,
            budget_projection: None,
            budget_prototypes: None,
            budget_scores: None,
            epochs: 100,
            batch_size: 256,
            learning_rate: 0.05,
            lr_decay: 0.5,
            lr_decay_every: 25,
            seed: 42,
            class_weighting: false,
        }
    }
}

impl ProtoNnHyper {
    pub fn validate(&self, input_dim: usize) -> Result<()> {
        let field = |field: &str, message: String| Error::Config {
            field: field.into(),
            message,
        };
        if self.proj_dim == 0 || self.proj_dim > input_dim {
            return Err(field(
                "proj_dim",
                format!("must be in 1..={input_dim}, got {}", self.proj_dim),
            ));
        }
        if self.n_prototypes < N_CLASSES {
            return Err(field(
                "n_prototypes",
                format!("need at least {N_CLASSES}, got {}", self.n_prototypes),
            ));
        }
        if self.epochs == 0 {
            return Err(field("epochs", "must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(field("batch_size", "must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(field("learning_rate", "must be positive and finite".into()));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(field("lr_decay", "must be in (0, 1]".into()));
        }
        if self.lr_decay_every == 0 {
            return Err(field("lr_decay_every", "must be positive".into()));
        }
        Ok(())
    }
}

/// f64 parameter set used during optimization and by the gradient checker.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams {
    pub proj_dim: usize,
    pub input_dim: usize,
    pub n_prototypes: usize,
    pub n_classes: usize,
    /// `proj_dim x input_dim`, row-major.
    pub projection: Vec<f64>,
    /// `proj_dim x n_prototypes`, row-major (column j = prototype j).
    pub prototypes: Vec<f64>,
    /// `n_classes x n_prototypes`, row-major.
    pub scores: Vec<f64>,
    pub gamma: f64,
}

/// Gradients of the summed squared loss, same layouts as [`DenseParams`].
#[derive(Debug, Clone)]
pub struct Gradients {
    pub projection: Vec<f64>,
    pub prototypes: Vec<f64>,
    pub scores: Vec<f64>,
}

impl Gradients {
    fn zeros(p: &DenseParams) -> Gradients {
        Gradients {
            projection: vec![0.0; p.projection.len()],
            prototypes: vec![0.0; p.prototypes.len()],
            scores: vec![0.0; p.scores.len()],
        }
    }

    fn clear(&mut self) {
        self.projection.iter_mut().for_each(|v| *v = 0.0);
        self.prototypes.iter_mut().for_each(|v| *v = 0.0);
        self.scores.iter_mut().for_each(|v| *v = 0.0);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Scores,
    Prototypes,
    Projection,
}

struct Scratch {
    projected: Vec<f64>,
    kernels: Vec<f64>,
    errors: Vec<f64>,
    proto_coeff: Vec<f64>,
}

impl Scratch {
    fn new(p: &DenseParams) -> Scratch {
        Scratch {
            projected: vec![0.0; p.proj_dim],
            kernels: vec![0.0; p.n_prototypes],
            errors: vec![0.0; p.n_classes],
            proto_coeff: vec![0.0; p.n_prototypes],
        }
    }
}

/// One sample's forward pass plus the requested gradient accumulation.
/// Returns the sample's weighted squared loss.
fn accumulate_sample(
    p: &DenseParams,
    x: &[f64],
    label: usize,
    weight: f64,
    phase: Option<Phase>,
    grads: &mut Gradients,
    s: &mut Scratch,
) -> f64 {
    let d = p.proj_dim;
    let m = p.n_prototypes;
    let l_n = p.n_classes;
    let gamma_sq = p.gamma * p.gamma;

    for r in 0..d {
        let row = &p.projection[r * p.input_dim..(r + 1) * p.input_dim];
        let mut acc = 0.0;
        for (w, &v) in row.iter().zip(x.iter()) {
            acc += w * v;
        }
        s.projected[r] = acc;
    }

    for j in 0..m {
        let mut dist_sq = 0.0;
        for r in 0..d {
            let diff = s.projected[r] - p.prototypes[r * m + j];
            dist_sq += diff * diff;
        }
        s.kernels[j] = (-gamma_sq * dist_sq).exp();
    }

    let mut loss = 0.0;
    for l in 0..l_n {
        let mut score = 0.0;
        let row = &p.scores[l * m..(l + 1) * m];
        for j in 0..m {
            score += row[j] * s.kernels[j];
        }
        let err = score - if l == label { 1.0 } else { 0.0 };
        s.errors[l] = err;
        loss += err * err;
    }
    loss *= weight;

    let Some(phase) = phase else {
        return loss;
    };

    match phase {
        Phase::Scores => {
            for l in 0..l_n {
                let coeff = 2.0 * weight * s.errors[l];
                let row = &mut grads.scores[l * m..(l + 1) * m];
                for j in 0..m {
                    row[j] += coeff * s.kernels[j];
                }
            }
        }
        Phase::Prototypes | Phase::Projection => {
            // proto_coeff[j] = sum_l err_l * scores[l][j]
            for j in 0..m {
                let mut acc = 0.0;
                for l in 0..l_n {
                    acc += s.errors[l] * p.scores[l * m + j];
                }
                s.proto_coeff[j] = acc;
            }
            if phase == Phase::Prototypes {
                let scale = 4.0 * weight * gamma_sq;
                for j in 0..m {
                    let coeff = scale * s.proto_coeff[j] * s.kernels[j];
                    for r in 0..d {
                        grads.prototypes[r * m + j] +=
                            coeff * (s.projected[r] - p.prototypes[r * m + j]);
                    }
                }
            } else {
                let scale = -4.0 * weight * gamma_sq;
                for r in 0..d {
                    let mut pulled = 0.0;
                    for j in 0..m {
                        pulled += s.proto_coeff[j]
                            * s.kernels[j]
                            * (s.projected[r] - p.prototypes[r * m + j]);
                    }
                    let coeff = scale * pulled;
                    let row = &mut grads.projection[r * p.input_dim..(r + 1) * p.input_dim];
                    for (g, &v) in row.iter_mut().zip(x.iter()) {
                        *g += coeff * v;
                    }
                }
            }
        }
    }
    loss
}

fn sample_weight(weights: Option<[f64; 2]>, label: usize) -> f64 {
    weights.map_or(1.0, |w| w[label])
}

/// Summed squared loss `sum_i w_i * ||onehot(y_i) - score(x_i)||^2` over
/// row-major data (`n x input_dim`).
pub fn squared_loss(
    params: &DenseParams,
    data: &[f64],
    labels: &[bool],
    class_weights: Option<[f64; 2]>,
) -> f64 {
    let mut scratch = Scratch::new(params);
    let mut unused = Gradients {
        projection: Vec::new(),
        prototypes: Vec::new(),
        scores: Vec::new(),
    };
    let d = params.input_dim;
    labels
        .iter()
        .enumerate()
        .map(|(i, &fog)| {
            accumulate_sample(
                params,
                &data[i * d..(i + 1) * d],
                fog as usize,
                sample_weight(class_weights, fog as usize),
                None,
                &mut unused,
                &mut scratch,
            )
        })
        .sum()
}

/// Loss plus analytic gradients with respect to all three matrices.
pub fn loss_gradients(
    params: &DenseParams,
    data: &[f64],
    labels: &[bool],
    class_weights: Option<[f64; 2]>,
) -> (f64, Gradients) {
    let mut grads = Gradients::zeros(params);
    let mut scratch = Scratch::new(params);
    let d = params.input_dim;
    let mut loss = 0.0;
    for phase in [Phase::Scores, Phase::Prototypes, Phase::Projection] {
        let mut phase_loss = 0.0;
        for (i, &fog) in labels.iter().enumerate() {
            phase_loss += accumulate_sample(
                params,
                &data[i * d..(i + 1) * d],
                fog as usize,
                sample_weight(class_weights, fog as usize),
                Some(phase),
                &mut grads,
                &mut scratch,
            );
        }
        loss = phase_loss;
    }
    (loss, grads)
}

/// Seeded Lloyd k-means over row-major points; returns `k x dim` centers.
fn kmeans(points: &[f64], dim: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = points.len() / dim;
    debug_assert!(n > 0 && k > 0);
    let mut centers = vec![0.0f64; k * dim];
    if n >= k {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(rng);
        for (c, &i) in idx[..k].iter().enumerate() {
            centers[c * dim..(c + 1) * dim].copy_from_slice(&points[i * dim..(i + 1) * dim]);
        }
    } else {
        for c in 0..k {
            let i = rng.random_range(0..n);
            centers[c * dim..(c + 1) * dim].copy_from_slice(&points[i * dim..(i + 1) * dim]);
        }
        return centers;
    }

    let mut assignment = vec![0usize; n];
    for _ in 0..25 {
        let mut changed = false;
        for i in 0..n {
            let p = &points[i * dim..(i + 1) * dim];
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for c in 0..k {
                let center = &centers[c * dim..(c + 1) * dim];
                let mut dist = 0.0;
                for (a, b) in p.iter().zip(center.iter()) {
                    dist += (a - b) * (a - b);
                }
                if dist < best_d {
                    best_d = dist;
                    best = c;
                }
            }
            if assignment[i] != best {
                assignment[i] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut counts = vec![0usize; k];
        let mut sums = vec![0.0f64; k * dim];
        for i in 0..n {
            let c = assignment[i];
            counts[c] += 1;
            for r in 0..dim {
                sums[c * dim + r] += points[i * dim + r];
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                continue; // keep the previous center for empty clusters
            }
            for r in 0..dim {
                centers[c * dim + r] = sums[c * dim + r] / counts[c] as f64;
            }
        }
    }
    centers
}

/// Median of point-to-prototype distances over a strided point sample.
fn median_distance(projected: &[f64], dim: usize, prototypes: &[f64], m: usize) -> f64 {
    let n = projected.len() / dim;
    let step = (n / 512).max(1);
    let mut dists = Vec::new();
    let mut i = 0;
    while i < n {
        let p = &projected[i * dim..(i + 1) * dim];
        for j in 0..m {
            let mut d = 0.0;
            for r in 0..dim {
                let diff = p[r] - prototypes[r * m + j];
                d += diff * diff;
            }
            dists.push(d.sqrt());
        }
        i += step;
    }
    dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
    dists[dists.len() / 2]
}

/// A trained model plus the final mean training loss.
#[derive(Debug, Clone)]
pub struct Trained {
    pub model: ProtoNnModel,
    pub final_loss: f64,
}

/// Train on a raw feature matrix: fits normalization statistics (quantized
/// to the deployed f32 precision), optimizes in the normalized space, and
/// packages everything into a scoring-ready model.
pub fn train(
    matrix: &FeatureMatrix,
    hyper: &ProtoNnHyper,
    schema_digest: [u8; 32],
) -> Result<Trained> {
    let input_dim = matrix.n_cols();
    hyper.validate(input_dim)?;
    let n = matrix.n_rows();
    let labels = matrix.labels();
    let n_pos = labels.iter().filter(|&&b| b).count();
    if n_pos == 0 || n_pos == n {
        return Err(Error::Model(
            "training data contains a single class".into(),
        ));
    }

    // Normalize with f32-quantized statistics so training sees exactly the
    // affine map the serialized model will apply.
    let stats = NormStats::fit(matrix);
    let (mean32, std32) = stats.to_f32();
    let mut data = vec![0.0f64; n * input_dim];
    for (i, value) in matrix.values().iter().enumerate() {
        let c = i % input_dim;
        data[i] = (value - mean32[c] as f64) / std32[c] as f64;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let d = hyper.proj_dim;
    let m = hyper.n_prototypes;

    let init_scale = 1.0 / (input_dim as f64).sqrt();
    let mut params = DenseParams {
        proj_dim: d,
        input_dim,
        n_prototypes: m,
        n_classes: N_CLASSES,
        projection: (0..d * input_dim)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z * init_scale
            })
            .collect(),
        prototypes: vec![0.0; d * m],
        scores: vec![0.0; N_CLASSES * m],
        gamma: 1.0,
    };

    let mut projected = vec![0.0f64; n * d];
    for i in 0..n {
        let x = &data[i * input_dim..(i + 1) * input_dim];
        for r in 0..d {
            let row = &params.projection[r * input_dim..(r + 1) * input_dim];
            projected[i * d + r] = row.iter().zip(x.iter()).map(|(w, v)| w * v).sum();
        }
    }

    // Prototypes: k-means per class on the projected points; the Normal
    // class takes the extra center when m is odd.
    let m_neg = m - m / 2;
    let m_pos = m / 2;
    let mut class_points: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    for (i, &fog) in labels.iter().enumerate() {
        class_points[fog as usize].extend_from_slice(&projected[i * d..(i + 1) * d]);
    }
    let centers_neg = kmeans(&class_points[0], d, m_neg, &mut rng);
    let centers_pos = kmeans(&class_points[1], d, m_pos, &mut rng);
    for j in 0..m {
        let (centers, local, class) = if j < m_neg {
            (&centers_neg, j, 0usize)
        } else {
            (&centers_pos, j - m_neg, 1usize)
        };
        for r in 0..d {
            params.prototypes[r * m + j] = centers[local * d + r];
        }
        params.scores[class * m + j] = 1.0;
    }

    let median = median_distance(&projected, d, &params.prototypes, m).max(1e-6);
    params.gamma = 2.5 / median;

    let class_weights = if hyper.class_weighting {
        Some([
            n as f64 / (2.0 * (n - n_pos) as f64),
            n as f64 / (2.0 * n_pos as f64),
        ])
    } else {
        None
    };

    let mut grads = Gradients::zeros(&params);
    let mut scratch = Scratch::new(&params);
    let mut order: Vec<usize> = (0..n).collect();

    for epoch in 0..hyper.epochs {
        let lr = hyper.learning_rate
            * hyper.lr_decay.powi((epoch / hyper.lr_decay_every) as i32);
        order.shuffle(&mut rng);
        for phase in [Phase::Scores, Phase::Prototypes, Phase::Projection] {
            for batch in order.chunks(hyper.batch_size) {
                grads.clear();
                let mut batch_loss = 0.0;
                for &i in batch {
                    batch_loss += accumulate_sample(
                        &params,
                        &data[i * input_dim..(i + 1) * input_dim],
                        labels[i] as usize,
                        sample_weight(class_weights, labels[i] as usize),
                        Some(phase),
                        &mut grads,
                        &mut scratch,
                    );
                }
                if !batch_loss.is_finite() {
                    return Err(Error::Diverged { epoch });
                }
                let step = lr / batch.len() as f64;
                let (target, grad): (&mut [f64], &[f64]) = match phase {
                    Phase::Scores => (&mut params.scores, &grads.scores),
                    Phase::Prototypes => (&mut params.prototypes, &grads.prototypes),
                    Phase::Projection => (&mut params.projection, &grads.projection),
                };
                for (t, g) in target.iter_mut().zip(grad.iter()) {
                    *t -= step * g;
                }
            }
            let budget = match phase {
                Phase::Scores => hyper.budget_scores,
                Phase::Prototypes => hyper.budget_prototypes,
                Phase::Projection => hyper.budget_projection,
            };
            if let Some(budget) = budget {
                let target = match phase {
                    Phase::Scores => &mut params.scores,
                    Phase::Prototypes => &mut params.prototypes,
                    Phase::Projection => &mut params.projection,
                };
                hard_threshold(target, budget);
            }
        }
    }

    let final_loss = squared_loss(&params, &data, labels, class_weights) / n as f64;
    if !final_loss.is_finite() {
        return Err(Error::Diverged {
            epoch: hyper.epochs,
        });
    }

    Ok(Trained {
        model: ProtoNnModel {
            projection: Mat32::from_f64(d, input_dim, &params.projection),
            prototypes: Mat32::from_f64(d, m, &params.prototypes),
            scores: Mat32::from_f64(N_CLASSES, m, &params.scores),
            gamma: params.gamma as f32,
            norm_mean: mean32,
            norm_std: std32,
            schema_digest,
        },
        final_loss,
    })
}
