//! Small deterministic trainer for gradient-boosted trees and random forests.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::features::FeatureVector;
use super::model::{ModelType, Node, Tree, TreeEnsembleModel, FORMAT_VERSION};
use super::predict::logistic;

/// Splits must improve the objective by more than this.
const MIN_GAIN: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TrainError {
    #[error("degenerate dataset: {0}")]
    DegenerateDataset(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainParams {
    pub model_type: ModelType,
    pub max_depth: usize,
    pub n_trees: usize,
    pub learning_rate: f64,
    /// L2 penalty on boosted leaf weights.
    pub lambda: f64,
    pub bootstrap_fraction: f64,
    /// Forest class count; defaults to the largest label plus one.
    pub num_classes: Option<usize>,
    pub seed: u64,
    pub model_id: String,
    pub version: String,
    pub description: String,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            model_type: ModelType::GbdtBinary,
            max_depth: 3,
            n_trees: 100,
            learning_rate: 0.1,
            lambda: 1.0,
            bootstrap_fraction: 0.8,
            num_classes: None,
            seed: 0,
            model_id: "model".into(),
            version: "1".into(),
            description: String::new(),
        }
    }
}

fn degenerate(msg: impl Into<String>) -> TrainError {
    TrainError::DegenerateDataset(msg.into())
}

/// Midpoint between neighbouring distinct values such that `lo < t <= hi`.
fn threshold_between(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid > lo {
        mid
    } else {
        hi
    }
}

/// Sample indices sorted by one feature, ties broken by index.
fn sorted_by(x: &[Vec<f64>], idx: &[usize], f: usize) -> Vec<usize> {
    let mut s = idx.to_vec();
    s.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]).then(a.cmp(&b)));
    s
}

struct Split {
    feature: usize,
    threshold: f64,
    gain: f64,
}

/// Best split over `features` for an additive per-sample statistic `S` with score `score(S)`;
/// the gain is `score(left) + score(right) − score(all)`.
fn best_split<S: Copy + Default + std::ops::Add<Output = S> + std::ops::Sub<Output = S>>(
    x: &[Vec<f64>],
    idx: &[usize],
    features: &[usize],
    stat: impl Fn(usize) -> S,
    score: impl Fn(S) -> f64,
) -> Option<Split> {
    let total = idx.iter().fold(S::default(), |a, &i| a + stat(i));
    let parent = score(total);
    let mut best: Option<Split> = None;
    for &f in features {
        let order = sorted_by(x, idx, f);
        let mut left = S::default();
        for w in 0..order.len() - 1 {
            left = left + stat(order[w]);
            let (lo, hi) = (x[order[w]][f], x[order[w + 1]][f]);
            if lo == hi {
                continue;
            }
            let gain = score(left) + score(total - left) - parent;
            if gain > MIN_GAIN && best.as_ref().is_none_or(|b| gain > b.gain) {
                best = Some(Split { feature: f, threshold: threshold_between(lo, hi), gain });
            }
        }
    }
    best
}

fn partition(x: &[Vec<f64>], idx: &[usize], s: &Split) -> (Vec<usize>, Vec<usize>) {
    idx.iter().partition(|&&i| x[i][s.feature] < s.threshold)
}

#[derive(Clone, Copy, Default)]
struct GradStat {
    g: f64,
    h: f64,
}

impl std::ops::Add for GradStat {
    type Output = GradStat;
    fn add(self, o: GradStat) -> GradStat {
        GradStat { g: self.g + o.g, h: self.h + o.h }
    }
}

impl std::ops::Sub for GradStat {
    type Output = GradStat;
    fn sub(self, o: GradStat) -> GradStat {
        GradStat { g: self.g - o.g, h: self.h - o.h }
    }
}

struct BoostCtx<'a> {
    x: &'a [Vec<f64>],
    grad: &'a [GradStat],
    features: Vec<usize>,
    lambda: f64,
    learning_rate: f64,
    max_depth: usize,
}

impl BoostCtx<'_> {
    fn build(&self, idx: &[usize], depth: usize, nodes: &mut Vec<Node>) -> usize {
        let at = nodes.len();
        nodes.push(Node::Leaf { value: 0.0 });
        let lambda = self.lambda;
        let split = (depth < self.max_depth && idx.len() >= 2)
            .then(|| {
                best_split(self.x, idx, &self.features, |i| self.grad[i], |s: GradStat| s.g * s.g / (s.h + lambda))
            })
            .flatten();
        nodes[at] = match split {
            Some(s) => {
                let (l, r) = partition(self.x, idx, &s);
                let left = self.build(&l, depth + 1, nodes);
                let right = self.build(&r, depth + 1, nodes);
                Node::Split { feature: s.feature, threshold: s.threshold, left, right }
            }
            None => {
                let t = idx.iter().fold(GradStat::default(), |a, &i| a + self.grad[i]);
                Node::Leaf { value: -self.learning_rate * t.g / (t.h + lambda) }
            }
        };
        at
    }
}

fn train_gbdt(x: &[Vec<f64>], y: &[usize], p: &TrainParams) -> Result<(f64, Vec<Tree>), TrainError> {
    if let Some(&bad) = y.iter().find(|&&l| l > 1) {
        return Err(degenerate(format!("binary model given label {bad}")));
    }
    let n = y.len() as f64;
    let pos = y.iter().filter(|&&l| l == 1).count() as f64;
    let base = (pos / (n - pos)).ln();
    let mut score = vec![base; y.len()];
    let all: Vec<usize> = (0..y.len()).collect();
    let mut trees = Vec::with_capacity(p.n_trees);
    for _ in 0..p.n_trees {
        let grad: Vec<GradStat> = score
            .iter()
            .zip(y)
            .map(|(&s, &l)| {
                let q = logistic(s);
                GradStat { g: q - l as f64, h: q * (1.0 - q) }
            })
            .collect();
        let ctx = BoostCtx {
            x,
            grad: &grad,
            features: (0..x[0].len()).collect(),
            lambda: p.lambda,
            learning_rate: p.learning_rate,
            max_depth: p.max_depth,
        };
        let mut nodes = Vec::new();
        ctx.build(&all, 0, &mut nodes);
        let tree = Tree { nodes };
        for (i, s) in score.iter_mut().enumerate() {
            *s += leaf_value(&tree, &x[i]);
        }
        trees.push(tree);
    }
    Ok((base, trees))
}

fn leaf_value(tree: &Tree, x: &[f64]) -> f64 {
    let mut i = 0;
    loop {
        match &tree.nodes[i] {
            Node::Split { feature, threshold, left, right } => {
                i = if x[*feature] < *threshold { *left } else { *right }
            }
            Node::Leaf { value } => return *value,
            Node::Distribution { .. } => return 0.0,
        }
    }
}

/// Per-class counts as an additive statistic.
#[derive(Clone, Copy, Default)]
struct Counts([f64; MAX_CLASSES]);

const MAX_CLASSES: usize = 16;

impl std::ops::Add for Counts {
    type Output = Counts;
    fn add(mut self, o: Counts) -> Counts {
        self.0.iter_mut().zip(o.0).for_each(|(a, b)| *a += b);
        self
    }
}

impl std::ops::Sub for Counts {
    type Output = Counts;
    fn sub(mut self, o: Counts) -> Counts {
        self.0.iter_mut().zip(o.0).for_each(|(a, b)| *a -= b);
        self
    }
}

/// Negative Gini impurity weighted by node size: `Σc n_c² / n − n`.
fn neg_weighted_gini(c: Counts) -> f64 {
    let n: f64 = c.0.iter().sum();
    if n == 0.0 {
        return 0.0;
    }
    c.0.iter().map(|v| v * v).sum::<f64>() / n - n
}

struct ForestCtx<'a> {
    x: &'a [Vec<f64>],
    y: &'a [usize],
    num_classes: usize,
    mtry: usize,
    max_depth: usize,
}

impl ForestCtx<'_> {
    fn build(&self, idx: &[usize], depth: usize, rng: &mut ChaCha8Rng, nodes: &mut Vec<Node>) -> usize {
        let at = nodes.len();
        nodes.push(Node::Leaf { value: 0.0 });
        let stat = |i: usize| {
            let mut c = Counts::default();
            c.0[self.y[i]] = 1.0;
            c
        };
        let pure = idx.iter().all(|&i| self.y[i] == self.y[idx[0]]);
        let split = if depth < self.max_depth && idx.len() >= 2 && !pure {
            let d = self.x[0].len();
            let mut features = sample(rng, d, self.mtry).into_vec();
            features.sort_unstable();
            best_split(self.x, idx, &features, stat, neg_weighted_gini)
        } else {
            None
        };
        nodes[at] = match split {
            Some(s) => {
                let (l, r) = partition(self.x, idx, &s);
                let left = self.build(&l, depth + 1, rng, nodes);
                let right = self.build(&r, depth + 1, rng, nodes);
                Node::Split { feature: s.feature, threshold: s.threshold, left, right }
            }
            None => {
                let mut counts = vec![0usize; self.num_classes];
                for &i in idx {
                    counts[self.y[i]] += 1;
                }
                let n = idx.len() as f64;
                Node::Distribution { probabilities: counts.iter().map(|&c| c as f64 / n).collect() }
            }
        };
        at
    }
}

fn train_forest(x: &[Vec<f64>], y: &[usize], num_classes: usize, p: &TrainParams) -> Result<Vec<Tree>, TrainError> {
    if num_classes > MAX_CLASSES {
        return Err(degenerate(format!("at most {MAX_CLASSES} classes supported")));
    }
    if let Some(&bad) = y.iter().find(|&&l| l >= num_classes) {
        return Err(degenerate(format!("label {bad} outside {num_classes} classes")));
    }
    if !(p.bootstrap_fraction > 0.0 && p.bootstrap_fraction <= 1.0) {
        return Err(degenerate("bootstrap fraction must lie in (0, 1]"));
    }
    let d = x[0].len();
    let ctx =
        ForestCtx { x, y, num_classes, mtry: ((d as f64).sqrt().round() as usize).clamp(1, d), max_depth: p.max_depth };
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let m = ((p.bootstrap_fraction * y.len() as f64).round() as usize).max(1);
    let mut trees = Vec::with_capacity(p.n_trees);
    for _ in 0..p.n_trees {
        let mut idx: Vec<usize> = (0..m).map(|_| rng.random_range(0..y.len())).collect();
        idx.sort_unstable();
        let mut nodes = Vec::new();
        ctx.build(&idx, 0, &mut rng, &mut nodes);
        trees.push(Tree { nodes });
    }
    Ok(trees)
}

/// Trains a model; the same dataset and parameters always give the same document.
pub fn train_ensemble(
    dataset: &[(FeatureVector, usize)],
    params: &TrainParams,
) -> Result<TreeEnsembleModel, TrainError> {
    let Some((first, _)) = dataset.first() else {
        return Err(degenerate("empty dataset"));
    };
    let names = first.feature_names.clone();
    if names.is_empty() {
        return Err(degenerate("no features"));
    }
    if dataset.iter().any(|(fv, _)| fv.feature_names != names) {
        return Err(degenerate("feature names differ between samples"));
    }
    if dataset.iter().any(|(fv, _)| fv.values.iter().any(|v| !v.is_finite())) {
        return Err(degenerate("non-finite feature value"));
    }
    let y: Vec<usize> = dataset.iter().map(|(_, l)| *l).collect();
    let mut classes = y.clone();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(degenerate("fewer than two classes present"));
    }
    if params.n_trees == 0 {
        return Err(degenerate("zero trees requested"));
    }
    let x: Vec<Vec<f64>> = dataset.iter().map(|(fv, _)| fv.values.clone()).collect();
    let (num_classes, base_score, trees) = match params.model_type {
        ModelType::GbdtBinary => {
            let (base, trees) = train_gbdt(&x, &y, params)?;
            (2, base, trees)
        }
        ModelType::RfMulticlass => {
            let k = params.num_classes.unwrap_or(classes[classes.len() - 1] + 1);
            (k, 0.0, train_forest(&x, &y, k, params)?)
        }
    };
    Ok(TreeEnsembleModel {
        format_version: FORMAT_VERSION,
        model_id: params.model_id.clone(),
        version: params.version.clone(),
        description: params.description.clone(),
        model_type: params.model_type,
        num_classes,
        feature_names: names,
        base_score,
        trees,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fv(v: &[f64]) -> FeatureVector {
        FeatureVector::new((0..v.len()).map(|i| format!("f{i}")).collect(), v.to_vec()).unwrap()
    }

    #[test]
    fn single_class_is_degenerate() {
        let data = vec![(fv(&[1.0]), 1), (fv(&[2.0]), 1)];
        assert!(matches!(train_ensemble(&data, &TrainParams::default()), Err(TrainError::DegenerateDataset(_))));
        assert!(matches!(train_ensemble(&[], &TrainParams::default()), Err(TrainError::DegenerateDataset(_))));
    }

    #[test]
    fn threshold_is_strictly_above_lower_value() {
        let lo = 1.0f64;
        let hi = f64::from_bits(lo.to_bits() + 1);
        let t = threshold_between(lo, hi);
        assert!(lo < t && t <= hi);
        assert_eq!(threshold_between(1.0, 3.0), 2.0);
    }

    #[test]
    fn boosted_stump_separates_one_feature() {
        let data: Vec<_> = (0..20).map(|i| (fv(&[i as f64, 0.0]), (i >= 10) as usize)).collect();
        let p = TrainParams { n_trees: 1, max_depth: 1, ..Default::default() };
        let m = train_ensemble(&data, &p).unwrap();
        assert_eq!(m.base_score, 0.0);
        match &m.trees[0].nodes[0] {
            Node::Split { feature, threshold, .. } => assert_eq!((*feature, *threshold), (0, 9.5)),
            other => panic!("{other:?}"),
        }
        m.validate().unwrap();
    }

    #[test]
    fn forest_leaves_are_distributions() {
        let data: Vec<_> = (0..40).map(|i| (fv(&[(i % 4) as f64, i as f64]), i % 4)).collect();
        let p = TrainParams { model_type: ModelType::RfMulticlass, n_trees: 10, ..Default::default() };
        let m = train_ensemble(&data, &p).unwrap();
        assert_eq!(m.num_classes, 4);
        m.validate().unwrap();
    }
}
