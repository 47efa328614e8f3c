//! Named feature vectors built from walking summaries.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::balance::SwayReport;
use crate::gait::{CycleParameters, WalkingSummary};

/// Cycles required per foot before features are extracted.
pub const MIN_CYCLES_PER_FOOT: usize = 3;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FeatureError {
    #[error("need {MIN_CYCLES_PER_FOOT} cycles per foot, found {left} left and {right} right")]
    TooFewCycles { left: usize, right: usize },
    #[error("duplicate feature name {0}")]
    DuplicateName(String),
    #[error("feature {0} is not finite")]
    NonFinite(String),
    #[error("{0} names for {1} values")]
    LengthMismatch(usize, usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub feature_names: Vec<String>,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(feature_names: Vec<String>, values: Vec<f64>) -> Result<Self, FeatureError> {
        if feature_names.len() != values.len() {
            return Err(FeatureError::LengthMismatch(feature_names.len(), values.len()));
        }
        let mut seen = std::collections::HashSet::new();
        for (n, v) in feature_names.iter().zip(&values) {
            if !seen.insert(n.as_str()) {
                return Err(FeatureError::DuplicateName(n.clone()));
            }
            if !v.is_finite() {
                return Err(FeatureError::NonFinite(n.clone()));
            }
        }
        Ok(FeatureVector { feature_names, values })
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.feature_names.iter().position(|n| n == name).map(|i| self.values[i])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// SHA-256 over names and the IEEE bit patterns of the values, hex encoded.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (n, v) in self.feature_names.iter().zip(&self.values) {
            h.update((n.len() as u64).to_le_bytes());
            h.update(n.as_bytes());
            h.update(v.to_bits().to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

/// `|L − R| / (0.5·(L + R))`, zero when both sides are zero.
pub fn asymmetry_index(left: f64, right: f64) -> f64 {
    let denom = 0.5 * (left + right).abs();
    if denom == 0.0 {
        return 0.0;
    }
    (left - right).abs() / denom
}

/// Names produced by [`extract_features`] without sway, in order.
pub fn gait_feature_names() -> Vec<String> {
    let mut names = Vec::new();
    for p in CycleParameters::NAMES {
        names.push(format!("{p}_mean"));
        names.push(format!("{p}_std"));
        names.push(format!("{p}_asym"));
    }
    names.push("session_cadence".into());
    names.push("turn_cycle_count".into());
    names
}

pub const SWAY_FEATURE_NAMES: [&str; 7] = [
    "sway_ml_range",
    "sway_ap_range",
    "sway_ml_rms",
    "sway_ap_rms",
    "sway_path_length",
    "sway_mean_velocity",
    "sway_ellipse_area",
];

pub fn extract_features(summary: &WalkingSummary, sway: Option<&SwayReport>) -> Result<FeatureVector, FeatureError> {
    let counts = summary.cycle_count;
    if counts.left < MIN_CYCLES_PER_FOOT || counts.right < MIN_CYCLES_PER_FOOT {
        return Err(FeatureError::TooFewCycles { left: counts.left, right: counts.right });
    }
    let mut values = Vec::new();
    for name in CycleParameters::NAMES {
        let p = summary.parameter(name).expect("summary carries every cycle parameter");
        values.push(p.mean);
        values.push(p.std);
        values.push(asymmetry_index(p.mean_left.unwrap_or(p.mean), p.mean_right.unwrap_or(p.mean)));
    }
    let cadence = summary.parameter("cadence").map(|p| p.mean).unwrap_or(0.0);
    values.push(summary.session_cadence.unwrap_or(cadence));
    values.push(summary.turn_excluded_count as f64);
    let mut names = gait_feature_names();
    if let Some(s) = sway {
        let m = s.combined.metrics;
        values.extend([
            m.ml_range_mm,
            m.ap_range_mm,
            m.ml_rms_mm,
            m.ap_rms_mm,
            m.path_length_mm,
            m.mean_velocity_mm_s,
            m.ellipse_area_mm2,
        ]);
        names.extend(SWAY_FEATURE_NAMES.iter().map(|s| s.to_string()));
    }
    FeatureVector::new(names, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gait::{summarize, GaitCycle};
    use crate::model::FootSide;

    fn cycles(n: u64, foot: FootSide, offset: u64) -> Vec<GaitCycle> {
        (0..n)
            .map(|k| {
                let hs = offset + k * 1200;
                GaitCycle {
                    foot,
                    hs_ms: hs,
                    ff_ms: hs + 100,
                    hr_ms: hs + 500,
                    to_ms: hs + 744,
                    next_hs_ms: hs + 1200,
                    opposite_hs_ms: hs + 600,
                    opposite_to_ms: hs + 144,
                    atypical: false,
                }
            })
            .collect()
    }

    #[test]
    fn identical_cycles_have_zero_spread_and_asymmetry() {
        let mut all = cycles(5, FootSide::Left, 0);
        all.extend(cycles(5, FootSide::Right, 600));
        let s = summarize(&all).unwrap();
        let fv = extract_features(&s, None).unwrap();
        assert_eq!(fv.feature_names, gait_feature_names());
        for (n, v) in fv.feature_names.iter().zip(&fv.values) {
            if n.ends_with("_std") || n.ends_with("_asym") {
                assert_eq!(*v, 0.0, "{n}");
            }
        }
        assert_eq!(fv.get("cadence_mean"), Some(100.0));
        assert_eq!(extract_features(&s, None).unwrap().hash(), fv.hash());
    }

    #[test]
    fn too_few_cycles() {
        let mut all = cycles(5, FootSide::Left, 0);
        all.extend(cycles(2, FootSide::Right, 600));
        let s = summarize(&all).unwrap();
        assert_eq!(extract_features(&s, None), Err(FeatureError::TooFewCycles { left: 5, right: 2 }));
    }

    #[test]
    fn asymmetry_examples() {
        assert_eq!(asymmetry_index(10.0, 10.0), 0.0);
        assert!((asymmetry_index(12.0, 8.0) - 0.4).abs() < 1e-12);
        assert_eq!(asymmetry_index(0.0, 0.0), 0.0);
    }

    #[test]
    fn vector_rejects_bad_input() {
        assert!(matches!(
            FeatureVector::new(vec!["a".into(), "a".into()], vec![1.0, 2.0]),
            Err(FeatureError::DuplicateName(_))
        ));
        assert!(matches!(FeatureVector::new(vec!["a".into()], vec![f64::NAN]), Err(FeatureError::NonFinite(_))));
        assert!(matches!(FeatureVector::new(vec!["a".into()], vec![]), Err(FeatureError::LengthMismatch(1, 0))));
    }

    #[test]
    fn hash_distinguishes_signed_zero() {
        let a = FeatureVector::new(vec!["x".into()], vec![0.0]).unwrap();
        let b = FeatureVector::new(vec!["x".into()], vec![-0.0]).unwrap();
        assert_ne!(a.hash(), b.hash());
    }
}
