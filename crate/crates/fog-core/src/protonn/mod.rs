//! Prototype-based resource-efficient classifier: a sparse projection into a
//! low-dimensional space, a set of prototypes living there, and a prototype
//! score matrix. An input is scored by RBF-kernel similarity to each
//! prototype:
//!
//! `score_l(x) = sum_j scores[l][j] * exp(-gamma^2 * ||P x - b_j||^2)`
//!
//! All three parameter matrices can be trained under explicit nonzero
//! budgets (iterative hard thresholding), which is what makes kilobyte-scale
//! serialized models possible. The serialized format defined here *is* the
//! model-size metric used everywhere else.

mod sweep;
mod train;

pub use sweep::{compress_sweep, SweepOutcome, SweepPoint};
pub use train::{
    loss_gradients, squared_loss, train, DenseParams, Gradients, ProtoNnHyper, Trained,
    N_CLASSES,
};

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MODEL_MAGIC: [u8; 4] = *b"PNN1";
pub const MODEL_FORMAT_VERSION: u16 = 1;

/// Dense row-major f32 matrix (the deployed parameter precision).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mat32 {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
}

impl Mat32 {
    pub fn zeros(rows: usize, cols: usize) -> Mat32 {
        Mat32 {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_f64(rows: usize, cols: usize, data: &[f64]) -> Mat32 {
        debug_assert_eq!(data.len(), rows * cols);
        Mat32 {
            rows,
            cols,
            data: data.iter().map(|&v| v as f32).collect(),
        }
    }

    pub fn at(&self, r: usize, c: usize) -> f32 {
        self.data[r * self.cols + c]
    }

    pub fn nnz(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0.0).count()
    }
}

/// Zero all but the `budget` largest-magnitude entries. Ties keep the
/// smaller flat index. Idempotent; never increases the nonzero count.
pub fn hard_threshold(values: &mut [f64], budget: usize) {
    if budget >= values.len() {
        return;
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_unstable_by(|&a, &b| {
        values[b]
            .abs()
            .partial_cmp(&values[a].abs())
            .unwrap()
            .then(a.cmp(&b))
    });
    for &i in &order[budget..] {
        values[i] = 0.0;
    }
}

/// Trained prototype classifier plus everything needed to score raw feature
/// rows: the input schema digest and per-feature normalization statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtoNnModel {
    /// `proj_dim x input_dim` projection.
    pub projection: Mat32,
    /// `proj_dim x n_prototypes`; column j is prototype j.
    pub prototypes: Mat32,
    /// `n_classes x n_prototypes` prototype score matrix.
    pub scores: Mat32,
    pub gamma: f32,
    pub norm_mean: Vec<f32>,
    pub norm_std: Vec<f32>,
    /// SHA-256 of the feature-subset manifest this model expects.
    pub schema_digest: [u8; 32],
}

impl ProtoNnModel {
    pub fn input_dim(&self) -> usize {
        self.projection.cols
    }

    pub fn proj_dim(&self) -> usize {
        self.projection.rows
    }

    pub fn n_prototypes(&self) -> usize {
        self.prototypes.cols
    }

    pub fn n_classes(&self) -> usize {
        self.scores.rows
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: x.len(),
            });
        }
        Ok(())
    }

    /// Per-class scores for an already-normalized feature vector.
    pub fn score_normalized(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(z)?;
        let d = self.proj_dim();
        let gamma_sq = (self.gamma as f64) * (self.gamma as f64);
        let mut projected = vec![0.0f64; d];
        for r in 0..d {
            let row = &self.projection.data[r * self.input_dim()..(r + 1) * self.input_dim()];
            let mut acc = 0.0;
            for (w, &x) in row.iter().zip(z.iter()) {
                acc += *w as f64 * x;
            }
            projected[r] = acc;
        }
        let mut out = vec![0.0f64; self.n_classes()];
        for j in 0..self.n_prototypes() {
            let mut dist_sq = 0.0;
            for r in 0..d {
                let diff = projected[r] - self.prototypes.at(r, j) as f64;
                dist_sq += diff * diff;
            }
            let kernel = (-gamma_sq * dist_sq).exp();
            for l in 0..self.n_classes() {
                out[l] += self.scores.at(l, j) as f64 * kernel;
            }
        }
        Ok(out)
    }

    /// Per-class scores for a raw feature vector (normalizes internally with
    /// the model's embedded statistics).
    pub fn score(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let z: Vec<f64> = x
            .iter()
            .enumerate()
            .map(|(i, &v)| (v - self.norm_mean[i] as f64) / self.norm_std[i] as f64)
            .collect();
        self.score_normalized(&z)
    }

    /// Predicted class index; ties resolve to the lower index (Normal).
    pub fn predict_class(&self, x: &[f64]) -> Result<usize> {
        let scores = self.score(x)?;
        let mut best = 0;
        for (l, &s) in scores.iter().enumerate() {
            if s > scores[best] {
                best = l;
            }
        }
        Ok(best)
    }

    pub fn predict_fog(&self, x: &[f64]) -> Result<bool> {
        Ok(self.predict_class(x)? == 1)
    }

    /// Exact serialized length in bytes. This is the model-size metric.
    pub fn size_bytes(&self) -> usize {
        17 + encoded_matrix_bytes(self.projection.data.len(), self.projection.nnz())
            + encoded_matrix_bytes(self.prototypes.data.len(), self.prototypes.nnz())
            + encoded_matrix_bytes(self.scores.data.len(), self.scores.nnz())
            + 8 * self.input_dim()
            + 32
    }

    pub fn serialize(&self, mut w: impl Write) -> Result<()> {
        for (name, dim) in [
            ("proj_dim", self.proj_dim()),
            ("input_dim", self.input_dim()),
            ("n_prototypes", self.n_prototypes()),
        ] {
            if dim > u16::MAX as usize {
                return Err(Error::Model(format!("{name} {dim} exceeds format limit")));
            }
        }
        w.write_all(&MODEL_MAGIC)?;
        w.write_all(&MODEL_FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(self.proj_dim() as u16).to_le_bytes())?;
        w.write_all(&(self.input_dim() as u16).to_le_bytes())?;
        w.write_all(&(self.n_prototypes() as u16).to_le_bytes())?;
        w.write_all(&[self.n_classes() as u8])?;
        w.write_all(&self.gamma.to_le_bytes())?;
        for m in [&self.projection, &self.prototypes, &self.scores] {
            write_matrix(&mut w, m)?;
        }
        for v in self.norm_mean.iter().chain(self.norm_std.iter()) {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&self.schema_digest)?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::with_capacity(self.size_bytes());
        self.serialize(&mut buf)?;
        debug_assert_eq!(buf.len(), self.size_bytes());
        Ok(buf)
    }

    pub fn deserialize(mut r: impl Read) -> Result<ProtoNnModel> {
        let ctx = "prototype model";
        let mut magic = [0u8; 4];
        read_exact(&mut r, &mut magic, ctx)?;
        if magic != MODEL_MAGIC {
            return Err(Error::BadMagic {
                context: ctx.into(),
                expected: MODEL_MAGIC,
            });
        }
        let version = read_u16(&mut r, ctx)?;
        if version != MODEL_FORMAT_VERSION {
            return Err(Error::Version {
                context: ctx.into(),
                version,
            });
        }
        let proj_dim = read_u16(&mut r, ctx)? as usize;
        let input_dim = read_u16(&mut r, ctx)? as usize;
        let n_prototypes = read_u16(&mut r, ctx)? as usize;
        let mut l = [0u8; 1];
        read_exact(&mut r, &mut l, ctx)?;
        let n_classes = l[0] as usize;
        let mut gamma = [0u8; 4];
        read_exact(&mut r, &mut gamma, ctx)?;
        let gamma = f32::from_le_bytes(gamma);

        let projection = read_matrix(&mut r, proj_dim, input_dim, ctx)?;
        let prototypes = read_matrix(&mut r, proj_dim, n_prototypes, ctx)?;
        let scores = read_matrix(&mut r, n_classes, n_prototypes, ctx)?;

        let mut norm_mean = vec![0.0f32; input_dim];
        let mut norm_std = vec![0.0f32; input_dim];
        for v in norm_mean.iter_mut().chain(norm_std.iter_mut()) {
            let mut b = [0u8; 4];
            read_exact(&mut r, &mut b, ctx)?;
            *v = f32::from_le_bytes(b);
        }
        let mut schema_digest = [0u8; 32];
        read_exact(&mut r, &mut schema_digest, ctx)?;
        Ok(ProtoNnModel {
            projection,
            prototypes,
            scores,
            gamma,
            norm_mean,
            norm_std,
            schema_digest,
        })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        self.serialize(&mut f)
    }

    pub fn load(path: &std::path::Path) -> Result<ProtoNnModel> {
        let f = std::fs::File::open(path)?;
        Self::deserialize(std::io::BufReader::new(f))
    }
}

/// Serialized length of one parameter matrix including its 5-byte header.
/// Sparse encoding (u16 flat index + f32 value per entry) is chosen whenever
/// it is strictly smaller and flat indices fit in u16.
pub fn encoded_matrix_bytes(slots: usize, nnz: usize) -> usize {
    5 + payload_bytes(slots, nnz).0
}

fn payload_bytes(slots: usize, nnz: usize) -> (usize, bool) {
    let dense = 4 * slots;
    let sparse = 6 * nnz;
    if slots <= u16::MAX as usize + 1 && sparse < dense {
        (sparse, true)
    } else {
        (dense, false)
    }
}

fn write_matrix(w: &mut impl Write, m: &Mat32) -> Result<()> {
    let (len, sparse) = payload_bytes(m.data.len(), m.nnz());
    w.write_all(&[sparse as u8])?;
    w.write_all(&(len as u32).to_le_bytes())?;
    if sparse {
        for (i, &v) in m.data.iter().enumerate() {
            if v != 0.0 {
                w.write_all(&(i as u16).to_le_bytes())?;
                w.write_all(&v.to_le_bytes())?;
            }
        }
    } else {
        for &v in &m.data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_matrix(r: &mut impl Read, rows: usize, cols: usize, ctx: &str) -> Result<Mat32> {
    let mut flag = [0u8; 1];
    read_exact(r, &mut flag, ctx)?;
    let mut len = [0u8; 4];
    read_exact(r, &mut len, ctx)?;
    let len = u32::from_le_bytes(len) as usize;
    let mut payload = vec![0u8; len];
    read_exact(r, &mut payload, ctx)?;
    let slots = rows * cols;
    let mut m = Mat32::zeros(rows, cols);
    match flag[0] {
        0 => {
            if len != 4 * slots {
                return Err(Error::Data(format!(
                    "dense payload of {len} bytes does not match {slots} slots"
                )));
            }
            for (i, chunk) in payload.chunks_exact(4).enumerate() {
                m.data[i] = f32::from_le_bytes(chunk.try_into().unwrap());
            }
        }
        1 => {
            if len % 6 != 0 {
                return Err(Error::Data("sparse payload length not a multiple of 6".into()));
            }
            let mut prev: Option<usize> = None;
            for chunk in payload.chunks_exact(6) {
                let idx = u16::from_le_bytes(chunk[0..2].try_into().unwrap()) as usize;
                if idx >= slots {
                    return Err(Error::Data(format!("sparse index {idx} out of range")));
                }
                if let Some(p) = prev {
                    if idx <= p {
                        return Err(Error::Data("sparse indices not strictly increasing".into()));
                    }
                }
                prev = Some(idx);
                m.data[idx] = f32::from_le_bytes(chunk[2..6].try_into().unwrap());
            }
        }
        other => {
            return Err(Error::Data(format!("unknown matrix encoding flag {other}")));
        }
    }
    Ok(m)
}

fn read_exact(r: &mut impl Read, buf: &mut [u8], ctx: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::Truncated { context: ctx.into() }
        } else {
            Error::Io(e)
        }
    })
}

fn read_u16(r: &mut impl Read, ctx: &str) -> Result<u16> {
    let mut b = [0u8; 2];
    read_exact(r, &mut b, ctx)?;
    Ok(u16::from_le_bytes(b))
}
