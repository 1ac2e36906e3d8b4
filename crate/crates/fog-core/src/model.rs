//! Family-agnostic model handle used by the evaluation harness, the
//! streaming simulator and the CLI.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protonn::ProtoNnModel;
use crate::trees::{DecisionTree, RandomForest, FOREST_MAGIC, TREE_MAGIC};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelFamily {
    ProtoNn,
    DecisionTree,
    RandomForest,
}

impl ModelFamily {
    pub fn name(self) -> &'static str {
        match self {
            ModelFamily::ProtoNn => "protonn",
            ModelFamily::DecisionTree => "decision_tree",
            ModelFamily::RandomForest => "random_forest",
        }
    }

    pub fn from_name(name: &str) -> Option<ModelFamily> {
        match name {
            "protonn" => Some(ModelFamily::ProtoNn),
            "decision_tree" | "tree" => Some(ModelFamily::DecisionTree),
            "random_forest" | "forest" => Some(ModelFamily::RandomForest),
            _ => None,
        }
    }
}

/// A trained classifier of any family.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyModel {
    ProtoNn(ProtoNnModel),
    Tree(DecisionTree),
    Forest(RandomForest),
}

impl AnyModel {
    pub fn family(&self) -> ModelFamily {
        match self {
            AnyModel::ProtoNn(_) => ModelFamily::ProtoNn,
            AnyModel::Tree(_) => ModelFamily::DecisionTree,
            AnyModel::Forest(_) => ModelFamily::RandomForest,
        }
    }

    pub fn n_features(&self) -> usize {
        match self {
            AnyModel::ProtoNn(m) => m.input_dim(),
            AnyModel::Tree(m) => m.n_features,
            AnyModel::Forest(m) => m.n_features,
        }
    }

    /// `[score(Normal), score(FoG)]` on a raw feature row.
    pub fn class_scores(&self, x: &[f64]) -> Result<[f64; 2]> {
        match self {
            AnyModel::ProtoNn(m) => {
                let s = m.score(x)?;
                Ok([s[0], s[1]])
            }
            AnyModel::Tree(m) => m.class_scores(x),
            AnyModel::Forest(m) => m.class_scores(x),
        }
    }

    /// FoG iff its score strictly exceeds Normal's (ties go to Normal).
    pub fn predict_fog(&self, x: &[f64]) -> Result<bool> {
        let s = self.class_scores(x)?;
        Ok(s[1] > s[0])
    }

    /// Serialized size; the size metric reported everywhere.
    pub fn size_bytes(&self) -> usize {
        match self {
            AnyModel::ProtoNn(m) => m.size_bytes(),
            AnyModel::Tree(m) => m.size_bytes(),
            AnyModel::Forest(m) => m.size_bytes(),
        }
    }

    /// Analytic per-inference scratch bytes on the deployment target.
    pub fn inference_scratch_bytes(&self) -> usize {
        match self {
            // Projected vector plus per-class accumulators, all f32.
            AnyModel::ProtoNn(m) => 4 * (m.proj_dim() + m.n_classes()),
            AnyModel::Tree(_) => 0,
            AnyModel::Forest(_) => 4, // vote counter
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        match self {
            AnyModel::ProtoNn(m) => m.to_bytes(),
            AnyModel::Tree(m) => m.to_bytes(),
            AnyModel::Forest(m) => m.to_bytes(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    /// Load any model format, dispatching on the leading magic bytes.
    pub fn load(path: &Path) -> Result<AnyModel> {
        let bytes = std::fs::read(path)?;
        if bytes.len() < 4 {
            return Err(Error::Truncated {
                context: format!("model file {}", path.display()),
            });
        }
        match &bytes[..4] {
            m if m == crate::protonn::MODEL_MAGIC => {
                Ok(AnyModel::ProtoNn(ProtoNnModel::deserialize(bytes.as_slice())?))
            }
            m if m == TREE_MAGIC => Ok(AnyModel::Tree(DecisionTree::deserialize(bytes.as_slice())?)),
            m if m == FOREST_MAGIC => {
                Ok(AnyModel::Forest(RandomForest::deserialize(bytes.as_slice())?))
            }
            _ => Err(Error::Data(format!(
                "unrecognized model magic in {}",
                path.display()
            ))),
        }
    }
}
