//! Decision support: features, tree-ensemble inference, metrics and training.

pub mod cohort;
pub mod features;
pub mod metrics;
pub mod model;
pub mod predict;
pub mod train;

pub use features::{
    asymmetry_index, extract_features, gait_feature_names, FeatureError, FeatureVector, SWAY_FEATURE_NAMES,
};
pub use metrics::{evaluate, f1_score, metrics_from_confusion, Averaging, Metrics, MetricsError};
pub use model::{
    deserialize_model, serialize_model, ModelError, ModelType, Node, Tree, TreeEnsembleModel, FORMAT_VERSION,
};
pub use predict::{argmax, logistic, predict_binary, predict_severity, PredictError, Prediction};
pub use train::{train_ensemble, TrainError, TrainParams};

/// Committed placeholder model documents.
pub const PLACEHOLDER_BINARY_JSON: &str = include_str!("../../../../models/pd-screen-placeholder.json");
pub const PLACEHOLDER_SEVERITY_JSON: &str = include_str!("../../../../models/updrs310-severity-placeholder.json");

pub fn placeholder_models() -> (TreeEnsembleModel, TreeEnsembleModel) {
    (
        deserialize_model(PLACEHOLDER_BINARY_JSON).expect("committed binary model is valid"),
        deserialize_model(PLACEHOLDER_SEVERITY_JSON).expect("committed severity model is valid"),
    )
}
