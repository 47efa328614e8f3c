//! Synthetic labelled cohort used to train the shipped placeholder models.
//! Labels come from generator settings, not from any clinical data.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::features::{extract_features, FeatureVector};
use super::model::{ModelType, TreeEnsembleModel};
use super::train::{train_ensemble, TrainParams};
use crate::gait::{analyze_walk, WalkConfig};
use crate::ingest::curate;
use crate::model::{default_layout, FootSegments};
use crate::sim::{generate_walk, GaitGenParams};

pub const BINARY_MODEL_ID: &str = "pd-screen-placeholder";
pub const SEVERITY_MODEL_ID: &str = "updrs310-severity-placeholder";
pub const PLACEHOLDER_VERSION: &str = "1";
pub const PLACEHOLDER_NOTICE: &str = "Non-clinical placeholder trained on synthetic gait; not for diagnostic use.";

/// Generator settings for a synthetic subject of severity 0 to 3.
pub fn subject_params(severity: usize, rng: &mut ChaCha8Rng) -> GaitGenParams {
    let s = severity as f64;
    GaitGenParams {
        cadence_steps_per_min: 116.0 - 7.0 * s + rng.random_range(-3.0..3.0),
        stance_fraction: 0.60 + 0.015 * s + rng.random_range(-0.01..0.01),
        stance_asymmetry: 0.012 * s + rng.random_range(0.0..0.006),
        noise_sigma_kpa: 10.0,
        duration_s: 20.0,
        rng_seed: rng.random(),
        ..Default::default()
    }
}

/// `per_class` subjects for each severity, as (features, severity).
pub fn synthetic_cohort(per_class: usize, seed: u64) -> Vec<(FeatureVector, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layout = default_layout();
    let mut out = Vec::new();
    for _ in 0..per_class {
        for severity in 0..4 {
            let walk = generate_walk(&subject_params(severity, &mut rng)).expect("cohort parameters are valid");
            let segments = FootSegments {
                left: curate(&walk.left, 100.0).expect("generated frames curate"),
                right: curate(&walk.right, 100.0).expect("generated frames curate"),
            };
            let analysis =
                analyze_walk(&segments, &layout, &WalkConfig::default()).expect("generated walks have cycles");
            out.push((extract_features(&analysis.summary, None).expect("enough cycles"), severity));
        }
    }
    out
}

/// The two shipped models, trained on [`synthetic_cohort`].
pub fn train_placeholders() -> (TreeEnsembleModel, TreeEnsembleModel) {
    let cohort = synthetic_cohort(12, 7);
    let binary: Vec<_> = cohort.iter().map(|(fv, s)| (fv.clone(), (*s > 0) as usize)).collect();
    let screen = train_ensemble(
        &binary,
        &TrainParams {
            model_type: ModelType::GbdtBinary,
            n_trees: 50,
            seed: 7,
            model_id: BINARY_MODEL_ID.into(),
            version: PLACEHOLDER_VERSION.into(),
            description: PLACEHOLDER_NOTICE.into(),
            ..Default::default()
        },
    )
    .expect("cohort has both classes");
    let severity = train_ensemble(
        &cohort,
        &TrainParams {
            model_type: ModelType::RfMulticlass,
            n_trees: 50,
            num_classes: Some(4),
            seed: 7,
            model_id: SEVERITY_MODEL_ID.into(),
            version: PLACEHOLDER_VERSION.into(),
            description: PLACEHOLDER_NOTICE.into(),
            ..Default::default()
        },
    )
    .expect("cohort has four classes");
    (screen, severity)
}
