//! Tree baselines: a CART-style decision tree (greedy Gini splits, midpoint
//! thresholds, pre-pruning via depth/leaf-size limits) and a bootstrap
//! random forest with per-tree feature subsampling.
//!
//! Serialized formats `TRE1`/`FRS1` use u16 child offsets, so a tree is
//! capped at `u16::MAX` nodes; the builder stops splitting at that point.

use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

pub const TREE_MAGIC: [u8; 4] = *b"TRE1";
pub const FOREST_MAGIC: [u8; 4] = *b"FRS1";
pub const TREE_FORMAT_VERSION: u16 = 1;
/// Feature-index sentinel marking a leaf record.
const LEAF_SENTINEL: u16 = u16::MAX;
/// Serialized node budget imposed by u16 child offsets.
const MAX_NODES: usize = u16::MAX as usize;

/// Default forest size; odd so majority votes cannot tie.
pub const DEFAULT_FOREST_TREES: usize = 51;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split {
        feature: u16,
        threshold: f32,
        left: u32,
        right: u32,
    },
    Leaf {
        class: u8,
        /// Fraction of the leaf's training windows belonging to `class`.
        prob: f32,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
    pub n_features: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub trees: Vec<DecisionTree>,
    pub n_features: usize,
}

fn gini(neg: usize, pos: usize) -> f64 {
    let n = (neg + pos) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let p = pos as f64 / n;
    2.0 * p * (1.0 - p)
}

struct TreeBuilder<'a> {
    matrix: &'a FeatureMatrix,
    features: Vec<usize>,
    max_depth: usize,
    min_leaf: usize,
    nodes: Vec<Node>,
    scratch: Vec<(f64, bool)>,
}

impl TreeBuilder<'_> {
    fn leaf(&mut self, rows: &[usize]) -> u32 {
        let pos = rows.iter().filter(|&&r| self.matrix.labels()[r]).count();
        let neg = rows.len() - pos;
        // Majority class; exact ties go to Normal.
        let (class, count) = if pos > neg { (1u8, pos) } else { (0u8, neg) };
        self.nodes.push(Node::Leaf {
            class,
            prob: count as f32 / rows.len() as f32,
        });
        (self.nodes.len() - 1) as u32
    }

    fn build(&mut self, rows: &mut [usize], depth: usize) -> u32 {
        let pos = rows.iter().filter(|&&r| self.matrix.labels()[r]).count();
        let neg = rows.len() - pos;
        if pos == 0
            || neg == 0
            || depth >= self.max_depth
            || rows.len() < 2 * self.min_leaf
            || self.nodes.len() + 2 > MAX_NODES
        {
            return self.leaf(rows);
        }

        let mut best: Option<(usize, f32, f64)> = None; // (feature, threshold, impurity)
        for &f in &self.features {
            self.scratch.clear();
            self.scratch
                .extend(rows.iter().map(|&r| (self.matrix.value(r, f), self.matrix.labels()[r])));
            self.scratch
                .sort_unstable_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            let mut left_pos = 0usize;
            for i in 0..self.scratch.len() - 1 {
                if self.scratch[i].1 {
                    left_pos += 1;
                }
                let left_n = i + 1;
                let right_n = self.scratch.len() - left_n;
                if left_n < self.min_leaf || right_n < self.min_leaf {
                    continue;
                }
                if self.scratch[i].0 >= self.scratch[i + 1].0 {
                    continue; // only between distinct values
                }
                let right_pos = pos - left_pos;
                let impurity = (left_n as f64 * gini(left_n - left_pos, left_pos)
                    + right_n as f64 * gini(right_n - right_pos, right_pos))
                    / rows.len() as f64;
                if best.map_or(true, |(_, _, b)| impurity < b) {
                    let threshold = ((self.scratch[i].0 + self.scratch[i + 1].0) / 2.0) as f32;
                    best = Some((f, threshold, impurity));
                }
            }
        }

        let Some((feature, threshold, impurity)) = best else {
            return self.leaf(rows); // all candidate features constant
        };
        if impurity >= gini(neg, pos) {
            return self.leaf(rows); // no split improves the node
        }

        // Partition with the exact predicate prediction will use.
        let mut split_at = 0usize;
        for i in 0..rows.len() {
            if self.matrix.value(rows[i], feature) <= threshold as f64 {
                rows.swap(i, split_at);
                split_at += 1;
            }
        }
        if split_at == 0 || split_at == rows.len() {
            return self.leaf(rows); // f32 threshold rounding collapsed a side
        }

        let node_index = self.nodes.len() as u32;
        self.nodes.push(Node::Leaf { class: 0, prob: 0.0 }); // placeholder
        let (left_rows, right_rows) = rows.split_at_mut(split_at);
        let left = self.build(left_rows, depth + 1);
        let right = self.build(right_rows, depth + 1);
        self.nodes[node_index as usize] = Node::Split {
            feature: feature as u16,
            threshold,
            left,
            right,
        };
        node_index
    }
}

fn train_tree_on(
    matrix: &FeatureMatrix,
    rows: &mut [usize],
    features: Vec<usize>,
    max_depth: usize,
    min_leaf: usize,
) -> Result<DecisionTree> {
    if rows.is_empty() {
        return Err(Error::Model("cannot train a tree on zero windows".into()));
    }
    if min_leaf == 0 {
        return Err(Error::Config {
            field: "min_leaf".into(),
            message: "must be at least 1".into(),
        });
    }
    if matrix.n_cols() >= LEAF_SENTINEL as usize {
        return Err(Error::Model(format!(
            "{} features exceed the serialized format's feature-index range",
            matrix.n_cols()
        )));
    }
    let mut builder = TreeBuilder {
        matrix,
        features,
        max_depth,
        min_leaf,
        nodes: Vec::new(),
        scratch: Vec::new(),
    };
    let root = builder.build(rows, 0);
    debug_assert_eq!(root, 0);
    Ok(DecisionTree {
        nodes: builder.nodes,
        n_features: matrix.n_cols(),
    })
}

/// Greedy Gini-split CART tree over all features. Deterministic: features
/// are scanned in column order and thresholds in value order, first best
/// split wins. Degenerate input yields a single-leaf tree.
pub fn train_tree(matrix: &FeatureMatrix, max_depth: usize, min_leaf: usize) -> Result<DecisionTree> {
    let mut rows: Vec<usize> = (0..matrix.n_rows()).collect();
    let features: Vec<usize> = (0..matrix.n_cols()).collect();
    train_tree_on(matrix, &mut rows, features, max_depth, min_leaf)
}

/// Bootstrap forest: each tree trains on an n-sized resample with a
/// per-tree feature subset of `ceil(feature_frac * D)` columns. Prediction
/// is a majority vote; ties resolve to Normal.
pub fn train_forest(
    matrix: &FeatureMatrix,
    n_trees: usize,
    max_depth: usize,
    min_leaf: usize,
    feature_frac: f64,
    seed: u64,
) -> Result<RandomForest> {
    if n_trees == 0 {
        return Err(Error::Config {
            field: "n_trees".into(),
            message: "need at least one tree".into(),
        });
    }
    if !(feature_frac > 0.0 && feature_frac <= 1.0) {
        return Err(Error::Config {
            field: "feature_frac".into(),
            message: format!("must be in (0, 1], got {feature_frac}"),
        });
    }
    let n = matrix.n_rows();
    let d = matrix.n_cols();
    let n_feats = ((feature_frac * d as f64).ceil() as usize).clamp(1, d);
    let trees: Vec<Result<DecisionTree>> = (0..n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(
                seed ^ (t as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
            );
            let mut rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let mut features: Vec<usize> = (0..d).collect();
            features.shuffle(&mut rng);
            features.truncate(n_feats);
            features.sort_unstable();
            train_tree_on(matrix, &mut rows, features, max_depth, min_leaf)
        })
        .collect();
    Ok(RandomForest {
        trees: trees.into_iter().collect::<Result<_>>()?,
        n_features: d,
    })
}

impl DecisionTree {
    fn leaf_for(&self, x: &[f64]) -> Result<(u8, f32)> {
        if x.len() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                actual: x.len(),
            });
        }
        let mut node = 0usize;
        loop {
            match self.nodes[node] {
                Node::Leaf { class, prob } => return Ok((class, prob)),
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if x[feature as usize] <= threshold as f64 {
                        left as usize
                    } else {
                        right as usize
                    };
                }
            }
        }
    }

    pub fn predict_fog(&self, x: &[f64]) -> Result<bool> {
        Ok(self.leaf_for(x)?.0 == 1)
    }

    /// `[p(Normal), p(FoG)]` from the reached leaf.
    pub fn class_scores(&self, x: &[f64]) -> Result<[f64; 2]> {
        let (class, prob) = self.leaf_for(x)?;
        let p = prob as f64;
        Ok(if class == 1 { [1.0 - p, p] } else { [p, 1.0 - p] })
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => {
                    1 + walk(nodes, left as usize).max(walk(nodes, right as usize))
                }
            }
        }
        walk(&self.nodes, 0)
    }

    /// Exact serialized length: 12-byte header plus 10 bytes per split node
    /// and 7 per leaf.
    pub fn size_bytes(&self) -> usize {
        12 + self
            .nodes
            .iter()
            .map(|n| match n {
                Node::Split { .. } => 10,
                Node::Leaf { .. } => 7,
            })
            .sum::<usize>()
    }

    pub fn serialize(&self, mut w: impl Write) -> Result<()> {
        w.write_all(&TREE_MAGIC)?;
        w.write_all(&TREE_FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(self.n_features as u16).to_le_bytes())?;
        w.write_all(&(self.nodes.len() as u32).to_le_bytes())?;
        for node in &self.nodes {
            match *node {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    w.write_all(&feature.to_le_bytes())?;
                    w.write_all(&threshold.to_le_bytes())?;
                    w.write_all(&(left as u16).to_le_bytes())?;
                    w.write_all(&(right as u16).to_le_bytes())?;
                }
                Node::Leaf { class, prob } => {
                    w.write_all(&LEAF_SENTINEL.to_le_bytes())?;
                    w.write_all(&[class])?;
                    w.write_all(&prob.to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::with_capacity(self.size_bytes());
        self.serialize(&mut buf)?;
        debug_assert_eq!(buf.len(), self.size_bytes());
        Ok(buf)
    }

    pub fn deserialize(mut r: impl Read) -> Result<DecisionTree> {
        let ctx = "decision tree";
        let mut magic = [0u8; 4];
        read_exact(&mut r, &mut magic, ctx)?;
        if magic != TREE_MAGIC {
            return Err(Error::BadMagic {
                context: ctx.into(),
                expected: TREE_MAGIC,
            });
        }
        let version = read_u16(&mut r, ctx)?;
        if version != TREE_FORMAT_VERSION {
            return Err(Error::Version {
                context: ctx.into(),
                version,
            });
        }
        let n_features = read_u16(&mut r, ctx)? as usize;
        let mut n_nodes = [0u8; 4];
        read_exact(&mut r, &mut n_nodes, ctx)?;
        let n_nodes = u32::from_le_bytes(n_nodes) as usize;
        let mut nodes = Vec::with_capacity(n_nodes);
        for _ in 0..n_nodes {
            let tag = read_u16(&mut r, ctx)?;
            if tag == LEAF_SENTINEL {
                let mut class = [0u8; 1];
                read_exact(&mut r, &mut class, ctx)?;
                let mut prob = [0u8; 4];
                read_exact(&mut r, &mut prob, ctx)?;
                nodes.push(Node::Leaf {
                    class: class[0],
                    prob: f32::from_le_bytes(prob),
                });
            } else {
                let mut threshold = [0u8; 4];
                read_exact(&mut r, &mut threshold, ctx)?;
                let left = read_u16(&mut r, ctx)? as u32;
                let right = read_u16(&mut r, ctx)? as u32;
                if left as usize >= n_nodes || right as usize >= n_nodes {
                    return Err(Error::Data("tree child offset out of range".into()));
                }
                nodes.push(Node::Split {
                    feature: tag,
                    threshold: f32::from_le_bytes(threshold),
                    left,
                    right,
                });
            }
        }
        if nodes.is_empty() {
            return Err(Error::Data("tree has no nodes".into()));
        }
        Ok(DecisionTree { nodes, n_features })
    }
}

impl RandomForest {
    pub fn predict_fog(&self, x: &[f64]) -> Result<bool> {
        let scores = self.class_scores(x)?;
        Ok(scores[1] > scores[0])
    }

    /// Vote shares over the trees; an exact tie favors Normal downstream.
    pub fn class_scores(&self, x: &[f64]) -> Result<[f64; 2]> {
        let mut fog_votes = 0usize;
        for tree in &self.trees {
            if tree.predict_fog(x)? {
                fog_votes += 1;
            }
        }
        let t = self.trees.len() as f64;
        Ok([(self.trees.len() - fog_votes) as f64 / t, fog_votes as f64 / t])
    }

    /// Header, per-tree directory of byte lengths, then the tree blobs.
    pub fn size_bytes(&self) -> usize {
        10 + 4 * self.trees.len() + self.trees.iter().map(DecisionTree::size_bytes).sum::<usize>()
    }

    pub fn serialize(&self, mut w: impl Write) -> Result<()> {
        w.write_all(&FOREST_MAGIC)?;
        w.write_all(&TREE_FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(self.trees.len() as u16).to_le_bytes())?;
        w.write_all(&(self.n_features as u16).to_le_bytes())?;
        for tree in &self.trees {
            w.write_all(&(tree.size_bytes() as u32).to_le_bytes())?;
        }
        for tree in &self.trees {
            tree.serialize(&mut w)?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::with_capacity(self.size_bytes());
        self.serialize(&mut buf)?;
        debug_assert_eq!(buf.len(), self.size_bytes());
        Ok(buf)
    }

    pub fn deserialize(mut r: impl Read) -> Result<RandomForest> {
        let ctx = "random forest";
        let mut magic = [0u8; 4];
        read_exact(&mut r, &mut magic, ctx)?;
        if magic != FOREST_MAGIC {
            return Err(Error::BadMagic {
                context: ctx.into(),
                expected: FOREST_MAGIC,
            });
        }
        let version = read_u16(&mut r, ctx)?;
        if version != TREE_FORMAT_VERSION {
            return Err(Error::Version {
                context: ctx.into(),
                version,
            });
        }
        let n_trees = read_u16(&mut r, ctx)? as usize;
        let n_features = read_u16(&mut r, ctx)? as usize;
        let mut lengths = Vec::with_capacity(n_trees);
        for _ in 0..n_trees {
            let mut b = [0u8; 4];
            read_exact(&mut r, &mut b, ctx)?;
            lengths.push(u32::from_le_bytes(b) as usize);
        }
        let mut trees = Vec::with_capacity(n_trees);
        for len in lengths {
            let mut blob = vec![0u8; len];
            read_exact(&mut r, &mut blob, ctx)?;
            trees.push(DecisionTree::deserialize(blob.as_slice())?);
        }
        if trees.is_empty() {
            return Err(Error::Data("forest has no trees".into()));
        }
        Ok(RandomForest { trees, n_features })
    }
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{Channel, FeatureDescriptor, FeatureKind};
    use crate::ingest::SubjectId;

    fn matrix_from_rows(rows: &[Vec<f64>], labels: Vec<bool>) -> FeatureMatrix {
        let d = rows[0].len();
        let descriptors: Vec<FeatureDescriptor> = Channel::ALL
            .iter()
            .flat_map(|&c| {
                FeatureKind::ALL
                    .iter()
                    .map(move |&k| FeatureDescriptor { channel: c, kind: k })
            })
            .take(d)
            .collect();
        let values: Vec<f64> = rows.iter().flatten().copied().collect();
        let n = labels.len();
        FeatureMatrix::new(descriptors, values, labels, vec![SubjectId(1); n]).unwrap()
    }

    fn accuracy(preds: &[bool], labels: &[bool]) -> f64 {
        preds.iter().zip(labels).filter(|(a, b)| a == b).count() as f64 / labels.len() as f64
    }

    fn tree_predictions(tree: &DecisionTree, matrix: &FeatureMatrix) -> Vec<bool> {
        (0..matrix.n_rows())
            .map(|i| tree.predict_fog(matrix.row(i)).unwrap())
            .collect()
    }

    fn xor_rows(n: usize) -> (Vec<Vec<f64>>, Vec<bool>) {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let x = if i % 2 == 0 { -1.0 } else { 1.0 };
            let y = if (i / 2) % 2 == 0 { -1.0 } else { 1.0 };
            let jitter = (i % 7) as f64 * 0.01;
            rows.push(vec![x + jitter, y - jitter]);
            labels.push((x > 0.0) != (y > 0.0));
        }
        (rows, labels)
    }

    #[test]
    fn separable_1d_needs_one_split() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 / 20.0]).collect();
        let labels: Vec<bool> = (0..20).map(|i| i >= 10).collect();
        let matrix = matrix_from_rows(&rows, labels.clone());
        let tree = train_tree(&matrix, 8, 1).unwrap();
        assert_eq!(tree.depth(), 1);
        assert_eq!(tree.n_nodes(), 3);
        assert_eq!(accuracy(&tree_predictions(&tree, &matrix), &labels), 1.0);
    }

    #[test]
    fn pure_node_becomes_leaf() {
        let rows = vec![vec![1.0], vec![2.0], vec![3.0]];
        let matrix = matrix_from_rows(&rows, vec![true, true, true]);
        let tree = train_tree(&matrix, 8, 1).unwrap();
        assert_eq!(tree.n_nodes(), 1);
        assert!(matches!(tree.nodes[0], Node::Leaf { class: 1, prob } if prob == 1.0));
    }

    #[test]
    fn constant_features_give_single_leaf() {
        let rows = vec![vec![5.0, 5.0]; 10];
        let labels: Vec<bool> = (0..10).map(|i| i % 2 == 0).collect();
        let matrix = matrix_from_rows(&rows, labels);
        let tree = train_tree(&matrix, 8, 1).unwrap();
        assert_eq!(tree.n_nodes(), 1);
    }

    #[test]
    fn depth_one_cannot_solve_xor() {
        let (rows, labels) = xor_rows(200);
        // Brute-force: the best single split on balanced XOR is 75% or less.
        let mut best = 0.0f64;
        for f in 0..2 {
            for t in [-1.5, -0.5, 0.0, 0.5, 1.5] {
                let preds: Vec<bool> = rows.iter().map(|r| r[f] <= t).collect();
                let acc = accuracy(&preds, &labels);
                best = best.max(acc).max(1.0 - acc);
            }
        }
        assert!(best <= 0.75);

        let matrix = matrix_from_rows(&rows, labels.clone());
        let stump = train_tree(&matrix, 1, 1).unwrap();
        assert!(stump.depth() <= 1);
        assert!(accuracy(&tree_predictions(&stump, &matrix), &labels) <= 0.75);

        let deep = train_tree(&matrix, 10, 1).unwrap();
        assert!(accuracy(&tree_predictions(&deep, &matrix), &labels) >= 0.99);
    }

    #[test]
    fn accuracy_non_decreasing_in_depth() {
        let (rows, labels) = xor_rows(240);
        let matrix = matrix_from_rows(&rows, labels.clone());
        let mut prev = 0.0;
        for depth in 1..=6 {
            let tree = train_tree(&matrix, depth, 1).unwrap();
            let acc = accuracy(&tree_predictions(&tree, &matrix), &labels);
            assert!(acc + 1e-12 >= prev, "depth {depth}: {acc} < {prev}");
            prev = acc;
        }
    }

    #[test]
    fn hand_built_tree_traces() {
        let tree = DecisionTree {
            n_features: 2,
            nodes: vec![
                Node::Split { feature: 0, threshold: 0.0, left: 1, right: 2 },
                Node::Leaf { class: 0, prob: 0.9 },
                Node::Split { feature: 1, threshold: 1.0, left: 3, right: 4 },
                Node::Leaf { class: 1, prob: 0.8 },
                Node::Leaf { class: 0, prob: 0.6 },
            ],
        };
        assert!(!tree.predict_fog(&[-1.0, 5.0]).unwrap());
        assert!(tree.predict_fog(&[1.0, 0.5]).unwrap());
        assert!(!tree.predict_fog(&[1.0, 2.0]).unwrap());
        let scores = tree.class_scores(&[1.0, 0.5]).unwrap();
        assert!((scores[0] - 0.2).abs() < 1e-6 && (scores[1] - 0.8).abs() < 1e-6);
        assert!(matches!(
            tree.predict_fog(&[0.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn forest_of_identical_trees_matches_single_tree() {
        let (rows, labels) = xor_rows(100);
        let matrix = matrix_from_rows(&rows, labels);
        let tree = train_tree(&matrix, 4, 1).unwrap();
        let forest = RandomForest {
            trees: vec![tree.clone(), tree.clone(), tree.clone()],
            n_features: 2,
        };
        for i in 0..matrix.n_rows() {
            assert_eq!(
                forest.predict_fog(matrix.row(i)).unwrap(),
                tree.predict_fog(matrix.row(i)).unwrap()
            );
        }
    }

    #[test]
    fn forest_is_deterministic_and_competitive() {
        let (rows, labels) = xor_rows(300);
        let matrix = matrix_from_rows(&rows, labels.clone());
        let a = train_forest(&matrix, 9, 8, 1, 1.0, 5).unwrap();
        let b = train_forest(&matrix, 9, 8, 1, 1.0, 5).unwrap();
        assert_eq!(a.to_bytes().unwrap(), b.to_bytes().unwrap());

        let single = train_tree(&matrix, 8, 1).unwrap();
        let single_acc = accuracy(&tree_predictions(&single, &matrix), &labels);
        let forest_preds: Vec<bool> = (0..matrix.n_rows())
            .map(|i| a.predict_fog(matrix.row(i)).unwrap())
            .collect();
        assert!(accuracy(&forest_preds, &labels) >= single_acc - 0.01);
    }

    #[test]
    fn tree_size_formula_matches_serialization() {
        let leaf_only = DecisionTree {
            n_features: 3,
            nodes: vec![Node::Leaf { class: 0, prob: 1.0 }],
        };
        assert_eq!(leaf_only.size_bytes(), 12 + 7);
        assert_eq!(leaf_only.to_bytes().unwrap().len(), 19);

        // Full depth-2 tree: 3 splits, 4 leaves.
        let (rows, labels) = xor_rows(64);
        let matrix = matrix_from_rows(&rows, labels);
        let tree = train_tree(&matrix, 2, 1).unwrap();
        let splits = tree
            .nodes
            .iter()
            .filter(|n| matches!(n, Node::Split { .. }))
            .count();
        let leaves = tree.nodes.len() - splits;
        assert_eq!(tree.size_bytes(), 12 + 10 * splits + 7 * leaves);
        assert_eq!(tree.to_bytes().unwrap().len(), tree.size_bytes());

        // Depth-d full binary tree has 2^(d+1) - 1 nodes.
        assert_eq!(tree.nodes.len(), 7);
    }

    #[test]
    fn tree_roundtrip_preserves_predictions() {
        let (rows, labels) = xor_rows(150);
        let matrix = matrix_from_rows(&rows, labels);
        let tree = train_tree(&matrix, 6, 2).unwrap();
        let back = DecisionTree::deserialize(tree.to_bytes().unwrap().as_slice()).unwrap();
        assert_eq!(back, tree);

        let forest = train_forest(&matrix, 5, 6, 2, 0.5, 1).unwrap();
        let bytes = forest.to_bytes().unwrap();
        assert_eq!(bytes.len(), forest.size_bytes());
        let back = RandomForest::deserialize(bytes.as_slice()).unwrap();
        assert_eq!(back, forest);
    }

    #[test]
    fn tree_deserialize_errors() {
        let tree = DecisionTree {
            n_features: 1,
            nodes: vec![Node::Leaf { class: 1, prob: 0.5 }],
        };
        let good = tree.to_bytes().unwrap();
        let mut bad = good.clone();
        bad[0] = b'Z';
        assert!(matches!(
            DecisionTree::deserialize(bad.as_slice()),
            Err(Error::BadMagic { .. })
        ));
        assert!(matches!(
            DecisionTree::deserialize(&good[..8]),
            Err(Error::Truncated { .. })
        ));
    }

    #[test]
    fn min_leaf_is_respected() {
        let (rows, labels) = xor_rows(64);
        let matrix = matrix_from_rows(&rows, labels);
        let tree = train_tree(&matrix, 10, 8).unwrap();
        fn leaf_sizes(tree: &DecisionTree, matrix: &FeatureMatrix) -> Vec<usize> {
            let mut counts = vec![0usize; tree.nodes.len()];
            for i in 0..matrix.n_rows() {
                let mut node = 0usize;
                loop {
                    match tree.nodes[node] {
                        Node::Leaf { .. } => {
                            counts[node] += 1;
                            break;
                        }
                        Node::Split { feature, threshold, left, right } => {
                            node = if matrix.value(i, feature as usize) <= threshold as f64 {
                                left as usize
                            } else {
                                right as usize
                            };
                        }
                    }
                }
            }
            tree.nodes
                .iter()
                .zip(&counts)
                .filter(|(n, _)| matches!(n, Node::Leaf { .. }))
                .map(|(_, &c)| c)
                .collect()
        }
        for size in leaf_sizes(&tree, &matrix) {
            assert!(size >= 8, "leaf holds {size} < min_leaf windows");
        }
    }
}
