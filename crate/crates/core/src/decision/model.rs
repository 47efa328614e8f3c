//! Tree-ensemble model documents.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const FORMAT_VERSION: u32 = 1;

/// Tolerance on the sum of a leaf class distribution.
pub const DISTRIBUTION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("model document violates the schema: {0}")]
    SchemaViolation(String),
    #[error("unsupported model format version {0}")]
    UnsupportedVersion(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelType {
    GbdtBinary,
    RfMulticlass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Node {
    /// Samples with `value < threshold` go to `left`.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
    Distribution {
        probabilities: Vec<f64>,
    },
}

/// Nodes of one tree; the root is node 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeEnsembleModel {
    pub format_version: u32,
    pub model_id: String,
    pub version: String,
    pub description: String,
    pub model_type: ModelType,
    pub num_classes: usize,
    pub feature_names: Vec<String>,
    /// Log-odds offset; zero for forests.
    pub base_score: f64,
    pub trees: Vec<Tree>,
}

fn violation(msg: impl Into<String>) -> ModelError {
    ModelError::SchemaViolation(msg.into())
}

impl Tree {
    /// Every node reachable from the root exactly once, children in range.
    fn validate(&self, model_type: ModelType, num_classes: usize, num_features: usize) -> Result<(), String> {
        if self.nodes.is_empty() {
            return Err("empty tree".into());
        }
        let mut visited = vec![false; self.nodes.len()];
        let mut stack = vec![0usize];
        while let Some(i) = stack.pop() {
            if std::mem::replace(&mut visited[i], true) {
                return Err(format!("node {i} reached twice"));
            }
            match &self.nodes[i] {
                Node::Split { feature, threshold, left, right } => {
                    if *feature >= num_features {
                        return Err(format!("node {i} uses feature {feature} of {num_features}"));
                    }
                    if !threshold.is_finite() {
                        return Err(format!("node {i} has a non-finite threshold"));
                    }
                    for &c in [left, right] {
                        if c >= self.nodes.len() {
                            return Err(format!("node {i} points to missing node {c}"));
                        }
                        stack.push(c);
                    }
                }
                Node::Leaf { value } => {
                    if model_type != ModelType::GbdtBinary {
                        return Err(format!("node {i}: value leaf in a forest"));
                    }
                    if !value.is_finite() {
                        return Err(format!("node {i} has a non-finite value"));
                    }
                }
                Node::Distribution { probabilities } => {
                    if model_type != ModelType::RfMulticlass {
                        return Err(format!("node {i}: distribution leaf in a boosted model"));
                    }
                    if probabilities.len() != num_classes {
                        return Err(format!("node {i} has {} classes, expected {num_classes}", probabilities.len()));
                    }
                    if probabilities.iter().any(|p| !p.is_finite() || *p < 0.0) {
                        return Err(format!("node {i} has an invalid probability"));
                    }
                    let sum: f64 = probabilities.iter().sum();
                    if (sum - 1.0).abs() > DISTRIBUTION_TOLERANCE {
                        return Err(format!("node {i} distribution sums to {sum}"));
                    }
                }
            }
        }
        if let Some(i) = visited.iter().position(|v| !v) {
            return Err(format!("node {i} is unreachable"));
        }
        Ok(())
    }
}

impl TreeEnsembleModel {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.format_version != FORMAT_VERSION {
            return Err(ModelError::UnsupportedVersion(self.format_version as u64));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = self.feature_names.iter().find(|n| !seen.insert(n.as_str())) {
            return Err(violation(format!("duplicate feature name {dup}")));
        }
        match self.model_type {
            ModelType::GbdtBinary if self.num_classes != 2 => {
                return Err(violation("boosted models are binary"));
            }
            ModelType::RfMulticlass if self.num_classes < 2 => {
                return Err(violation("forests need at least two classes"));
            }
            ModelType::RfMulticlass if self.trees.is_empty() => {
                return Err(violation("forest without trees"));
            }
            _ => {}
        }
        if !self.base_score.is_finite() {
            return Err(violation("non-finite base score"));
        }
        for (t, tree) in self.trees.iter().enumerate() {
            tree.validate(self.model_type, self.num_classes, self.feature_names.len())
                .map_err(|e| violation(format!("tree {t}: {e}")))?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("models serialize")
    }

    /// Parses and validates a model document. The version is checked before the
    /// rest of the schema so that future documents report the version mismatch.
    pub fn from_json(doc: &str) -> Result<Self, ModelError> {
        let value: serde_json::Value = serde_json::from_str(doc).map_err(|e| violation(e.to_string()))?;
        match value.get("format_version").and_then(|v| v.as_u64()) {
            Some(v) if v != FORMAT_VERSION as u64 => return Err(ModelError::UnsupportedVersion(v)),
            _ => {}
        }
        let model: TreeEnsembleModel = serde_json::from_value(value).map_err(|e| violation(e.to_string()))?;
        model.validate()?;
        Ok(model)
    }
}

pub fn serialize_model(model: &TreeEnsembleModel) -> String {
    model.to_json()
}

pub fn deserialize_model(doc: &str) -> Result<TreeEnsembleModel, ModelError> {
    TreeEnsembleModel::from_json(doc)
}
