//! Inference for the boosted screen and the severity forest.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::features::FeatureVector;
use super::model::{ModelType, Node, Tree, TreeEnsembleModel};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PredictError {
    #[error("feature {0} missing from the vector")]
    MissingFeature(String),
    #[error("model {0} has the wrong type for this prediction")]
    WrongModelType(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub probability: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub class_distribution: Option<Vec<f64>>,
    pub model_id: String,
    pub feature_vector_hash: String,
}

pub fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Lowest index among the maxima.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Feature values in model order. Non-finite values take the left branch.
fn aligned(model: &TreeEnsembleModel, fv: &FeatureVector) -> Result<Vec<f64>, PredictError> {
    model.feature_names.iter().map(|n| fv.get(n).ok_or_else(|| PredictError::MissingFeature(n.clone()))).collect()
}

fn leaf<'a>(tree: &'a Tree, x: &[f64]) -> &'a Node {
    let mut i = 0;
    loop {
        match &tree.nodes[i] {
            Node::Split { feature, threshold, left, right } => {
                let v = x[*feature];
                i = if !v.is_finite() || v < *threshold { *left } else { *right };
            }
            node => return node,
        }
    }
}

/// Raw log-odds: base score plus leaf values summed in tree order.
pub fn raw_score(model: &TreeEnsembleModel, x: &[f64]) -> f64 {
    let mut score = model.base_score;
    for t in &model.trees {
        if let Node::Leaf { value } = leaf(t, x) {
            score += value;
        }
    }
    score
}

/// Mean of the per-tree leaf distributions, accumulated in tree order.
pub fn forest_distribution(model: &TreeEnsembleModel, x: &[f64]) -> Vec<f64> {
    let mut acc = vec![0.0; model.num_classes];
    for t in &model.trees {
        if let Node::Distribution { probabilities } = leaf(t, x) {
            for (a, p) in acc.iter_mut().zip(probabilities) {
                *a += p;
            }
        }
    }
    let n = model.trees.len() as f64;
    acc.iter().map(|a| a / n).collect()
}

pub fn predict_binary(model: &TreeEnsembleModel, fv: &FeatureVector) -> Result<Prediction, PredictError> {
    if model.model_type != ModelType::GbdtBinary {
        return Err(PredictError::WrongModelType(model.model_id.clone()));
    }
    let p = logistic(raw_score(model, &aligned(model, fv)?));
    Ok(Prediction {
        label: (p >= 0.5) as usize,
        probability: Some(p),
        class_distribution: None,
        model_id: model.model_id.clone(),
        feature_vector_hash: fv.hash(),
    })
}

pub fn predict_severity(model: &TreeEnsembleModel, fv: &FeatureVector) -> Result<Prediction, PredictError> {
    if model.model_type != ModelType::RfMulticlass {
        return Err(PredictError::WrongModelType(model.model_id.clone()));
    }
    let dist = forest_distribution(model, &aligned(model, fv)?);
    Ok(Prediction {
        label: argmax(&dist),
        probability: None,
        class_distribution: Some(dist),
        model_id: model.model_id.clone(),
        feature_vector_hash: fv.hash(),
    })
}
