//! Heel and forefoot contact detection from group forces.

use serde::{Deserialize, Serialize};

use crate::ingest::CuratedSegment;
use crate::model::{SensorFrame, SensorLayout};
use crate::stats::percentile_lower;

/// Noise-floor compensation: thresholds are applied above the resting level of each
/// group, estimated from low percentiles of the group force over the segment.
///
/// `floor = P(high)`, `spread = P(high) − P(low)`; the effective on/off thresholds are
/// `theta_on + floor + gain·spread` and `theta_off + floor + gain·spread/2`. On a
/// noise-free signal both terms are zero and the plain thresholds apply.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FloorCompensation {
    pub low_percentile: f64,
    pub high_percentile: f64,
    pub spread_gain: f64,
}

impl Default for FloorCompensation {
    fn default() -> Self {
        FloorCompensation { low_percentile: 1.0, high_percentile: 20.0, spread_gain: 4.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactConfig {
    /// Group force (kPa summed over the group) above which contact begins.
    pub theta_on: f64,
    /// Group force below which contact ends.
    pub theta_off: f64,
    /// State changes lasting less than this are suppressed.
    pub min_dwell_ms: f64,
    pub floor: Option<FloorCompensation>,
}

impl Default for ContactConfig {
    fn default() -> Self {
        ContactConfig { theta_on: 30.0, theta_off: 15.0, min_dwell_ms: 50.0, floor: Some(FloorCompensation::default()) }
    }
}

impl ContactConfig {
    pub fn without_floor(self) -> Self {
        ContactConfig { floor: None, ..self }
    }

    pub fn is_valid(&self) -> bool {
        self.theta_off < self.theta_on && self.min_dwell_ms >= 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContactSample {
    pub t_ms: u64,
    pub heel_on: bool,
    pub fore_on: bool,
}

pub fn group_force(frame: &SensorFrame, group: &[usize]) -> f64 {
    group.iter().map(|&i| frame.pressure[i]).sum()
}

/// Two-threshold switch starting from "off".
pub fn hysteresis(forces: &[f64], on: f64, off: f64) -> Vec<bool> {
    let mut state = false;
    forces
        .iter()
        .map(|&f| {
            if !state && f > on {
                state = true;
            } else if state && f < off {
                state = false;
            }
            state
        })
        .collect()
}

/// Suppresses runs shorter than `min_samples` that would change the current state.
/// The initial state is "off"; an accepted change takes effect at the start of its run.
pub fn debounce(raw: &[bool], min_samples: usize) -> Vec<bool> {
    let mut out = Vec::with_capacity(raw.len());
    let mut current = false;
    let mut i = 0;
    while i < raw.len() {
        let value = raw[i];
        let run = raw[i..].iter().take_while(|&&v| v == value).count();
        if value != current && run >= min_samples {
            current = value;
        }
        out.extend(std::iter::repeat_n(current, run));
        i += run;
    }
    out
}

fn thresholds(forces: &[f64], cfg: &ContactConfig) -> (f64, f64) {
    match cfg.floor {
        Some(fc) => {
            let hi = percentile_lower(forces, fc.high_percentile);
            let lo = percentile_lower(forces, fc.low_percentile);
            let spread = hi - lo;
            (cfg.theta_on + hi + fc.spread_gain * spread, cfg.theta_off + hi + fc.spread_gain * spread / 2.0)
        }
        None => (cfg.theta_on, cfg.theta_off),
    }
}

fn group_contact(frames: &[SensorFrame], group: &[usize], cfg: &ContactConfig, dwell: usize) -> Vec<bool> {
    let forces: Vec<f64> = frames.iter().map(|f| group_force(f, group)).collect();
    let (on, off) = thresholds(&forces, cfg);
    debounce(&hysteresis(&forces, on, off), dwell)
}

/// Per-frame heel/forefoot contact for one uniformly sampled segment.
pub fn contact_signal(segment: &CuratedSegment, layout: &SensorLayout, cfg: &ContactConfig) -> Vec<ContactSample> {
    let dwell = (cfg.min_dwell_ms / segment.period_ms()).ceil() as usize;
    let heel = group_contact(&segment.frames, &layout.heel_group, cfg, dwell);
    let fore = group_contact(&segment.frames, &layout.forefoot_group, cfg, dwell);
    segment
        .frames
        .iter()
        .zip(heel.into_iter().zip(fore))
        .map(|(f, (heel_on, fore_on))| ContactSample { t_ms: f.t_ms, heel_on, fore_on })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{default_layout, FootSide};

    fn segment_with_heel(forces: &[f64]) -> CuratedSegment {
        let frames = forces
            .iter()
            .enumerate()
            .map(|(k, &force)| {
                let mut f = SensorFrame::zeroed(FootSide::Left, k as u32, k as u64 * 10);
                for i in 0..4 {
                    f.pressure[i] = force / 4.0;
                }
                f
            })
            .collect();
        CuratedSegment { foot: FootSide::Left, t0_ms: 0, rate_hz: 100.0, frames, gaps: vec![], dropped_count: 0 }
    }

    /// Reference debounce: a frame takes its raw value when the maximal run containing
    /// it is long enough, otherwise it keeps the previous frame's output.
    fn reference_debounce(raw: &[bool], min: usize) -> Vec<bool> {
        let mut out: Vec<bool> = Vec::new();
        for i in 0..raw.len() {
            let mut lo = i;
            while lo > 0 && raw[lo - 1] == raw[i] {
                lo -= 1;
            }
            let mut hi = i;
            while hi + 1 < raw.len() && raw[hi + 1] == raw[i] {
                hi += 1;
            }
            let v = if hi - lo + 1 >= min { raw[i] } else { out.last().copied().unwrap_or(false) };
            out.push(v);
        }
        out
    }

    fn reference_hysteresis(forces: &[f64], on: f64, off: f64) -> Vec<bool> {
        let mut out = Vec::new();
        for i in 0..forces.len() {
            let prev = if i == 0 { false } else { out[i - 1] };
            out.push(if prev { forces[i] >= off } else { forces[i] > on });
        }
        out
    }

    #[test]
    fn zero_pressure_is_no_contact() {
        let seg = segment_with_heel(&[0.0; 100]);
        let c = contact_signal(&seg, &default_layout(), &ContactConfig::default());
        assert!(c.iter().all(|s| !s.heel_on && !s.fore_on));
    }

    #[test]
    fn heel_step_switches_on_at_the_step() {
        let forces: Vec<f64> = (0..100).map(|k| if k < 50 { 0.0 } else { 100.0 }).collect();
        let seg = segment_with_heel(&forces);
        for cfg in [ContactConfig::default(), ContactConfig::default().without_floor()] {
            let c = contact_signal(&seg, &default_layout(), &cfg);
            for s in &c {
                assert_eq!(s.heel_on, s.t_ms >= 500, "t={}", s.t_ms);
                assert!(!s.fore_on);
            }
        }
    }

    #[test]
    fn oscillation_around_threshold_does_not_toggle() {
        let forces: Vec<f64> = (0..200).map(|k| if k % 2 == 0 { 25.0 } else { 35.0 }).collect();
        let seg = segment_with_heel(&forces);
        let cfg = ContactConfig::default().without_floor();
        let c: Vec<bool> = contact_signal(&seg, &default_layout(), &cfg).iter().map(|s| s.heel_on).collect();
        let reference = reference_debounce(&reference_hysteresis(&forces, 30.0, 15.0), 5);
        assert_eq!(c, reference);
        let toggles = c.windows(2).filter(|w| w[0] != w[1]).count();
        assert!(toggles <= 1);

        let with_floor = contact_signal(&seg, &default_layout(), &ContactConfig::default());
        assert!(with_floor.iter().all(|s| !s.heel_on));
    }

    #[test]
    fn debounce_matches_reference_on_all_short_patterns() {
        for bits in 0u32..(1 << 12) {
            let raw: Vec<bool> = (0..12).map(|i| bits >> i & 1 == 1).collect();
            for min in [0, 1, 2, 3, 5] {
                assert_eq!(debounce(&raw, min), reference_debounce(&raw, min), "{raw:?} min={min}");
            }
        }
    }

    #[test]
    fn hysteresis_matches_reference() {
        let forces: Vec<f64> = (0..500).map(|k| ((k * 37) % 61) as f64).collect();
        assert_eq!(hysteresis(&forces, 30.0, 15.0), reference_hysteresis(&forces, 30.0, 15.0));
    }

    #[test]
    fn config_validity() {
        assert!(ContactConfig::default().is_valid());
        let bad = ContactConfig { theta_off: 40.0, ..Default::default() };
        assert!(!bad.is_valid());
    }
}
