//! Walking summary: per-parameter statistics over gait cycles.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::cycles::{compute_parameters, CycleParameters, GaitCycle};
use super::welch::welch_t_test;
use crate::model::FootSide;
use crate::stats::{mean, sample_std, BoxStats};

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum SummaryError {
    #[error("no usable gait cycles")]
    NoCycles,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSummary {
    pub name: String,
    pub unit: String,
    pub mean: f64,
    pub std: f64,
    pub mean_left: Option<f64>,
    pub mean_right: Option<f64>,
    /// Welch test of left against right cycles; absent with fewer than two per foot.
    pub p_value: Option<f64>,
    #[serde(rename = "box")]
    pub box_stats: BoxStats,
    pub values_left: Vec<f64>,
    pub values_right: Vec<f64>,
}

/// Mean phase percentages for the circular diagram.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseFractions {
    pub stance: f64,
    pub swing: f64,
    pub single_support: f64,
    pub double_support: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleCounts {
    pub left: usize,
    pub right: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkingSummary {
    pub parameters: Vec<ParameterSummary>,
    pub phase_fractions: PhaseFractions,
    pub cycle_count: CycleCounts,
    pub atypical_count: usize,
    pub discarded_count: usize,
    pub turn_excluded_count: usize,
    /// 60 · steps / duration between the first and last heel strike of either foot.
    pub session_cadence: Option<f64>,
}

impl WalkingSummary {
    pub fn parameter(&self, name: &str) -> Option<&ParameterSummary> {
        self.parameters.iter().find(|p| p.name == name)
    }
}

/// Statistics over cycles; degenerate cycles are skipped and counted as discarded.
pub fn summarize(cycles: &[GaitCycle]) -> Result<WalkingSummary, SummaryError> {
    let mut per_foot: [Vec<CycleParameters>; 2] = [Vec::new(), Vec::new()];
    let mut discarded = 0;
    let mut atypical = 0;
    for c in cycles {
        match compute_parameters(c) {
            Ok(p) => {
                per_foot[(c.foot == FootSide::Right) as usize].push(p);
                atypical += c.atypical as usize;
            }
            Err(_) => discarded += 1,
        }
    }
    let all: Vec<CycleParameters> = per_foot.iter().flatten().copied().collect();
    if all.is_empty() {
        return Err(SummaryError::NoCycles);
    }

    let parameters = CycleParameters::NAMES
        .iter()
        .zip(CycleParameters::UNITS)
        .enumerate()
        .map(|(i, (name, unit))| {
            let column = |ps: &[CycleParameters]| ps.iter().map(|p| p.values()[i]).collect::<Vec<f64>>();
            let (left, right, both) = (column(&per_foot[0]), column(&per_foot[1]), column(&all));
            let foot_mean = |v: &[f64]| (!v.is_empty()).then(|| mean(v));
            ParameterSummary {
                name: name.to_string(),
                unit: unit.to_string(),
                mean: mean(&both),
                std: sample_std(&both),
                mean_left: foot_mean(&left),
                mean_right: foot_mean(&right),
                p_value: welch_t_test(&left, &right).ok(),
                box_stats: BoxStats::from_values(&both).expect("non-empty"),
                values_left: left,
                values_right: right,
            }
        })
        .collect();

    let stance = mean(&all.iter().map(|p| p.stance_pct).collect::<Vec<_>>());
    let phase_fractions = PhaseFractions {
        stance,
        swing: 100.0 - stance,
        single_support: mean(&all.iter().map(|p| p.single_support_pct).collect::<Vec<_>>()),
        double_support: mean(&all.iter().map(|p| p.double_support_pct).collect::<Vec<_>>()),
    };

    Ok(WalkingSummary {
        parameters,
        phase_fractions,
        cycle_count: CycleCounts { left: per_foot[0].len(), right: per_foot[1].len() },
        atypical_count: atypical,
        discarded_count: discarded,
        turn_excluded_count: 0,
        session_cadence: None,
    })
}

/// Steps per minute from heel-strike times of both feet.
pub fn session_cadence(heel_strikes_ms: &[u64]) -> Option<f64> {
    let first = *heel_strikes_ms.iter().min()?;
    let last = *heel_strikes_ms.iter().max()?;
    if heel_strikes_ms.len() < 2 || last == first {
        return None;
    }
    Some(60_000.0 * (heel_strikes_ms.len() - 1) as f64 / (last - first) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cycle(foot: FootSide, hs: u64, stride: u64, stance: f64) -> GaitCycle {
        let st = (stance * stride as f64) as u64;
        GaitCycle {
            foot,
            hs_ms: hs,
            ff_ms: hs + st / 5,
            hr_ms: hs + st / 2,
            to_ms: hs + st,
            next_hs_ms: hs + stride,
            opposite_to_ms: hs + st - stride / 2,
            opposite_hs_ms: hs + stride / 2,
            atypical: false,
        }
    }

    #[test]
    fn repeated_cycle_has_zero_spread() {
        let cycles: Vec<GaitCycle> = (0..6)
            .map(|k| cycle(if k % 2 == 0 { FootSide::Left } else { FootSide::Right }, k * 1000, 1000, 0.6))
            .collect();
        let s = summarize(&cycles).unwrap();
        for p in &s.parameters {
            assert_eq!(p.std, 0.0, "{}", p.name);
            assert_eq!(p.p_value, Some(1.0));
        }
        assert_eq!(s.cycle_count, CycleCounts { left: 3, right: 3 });
        assert!((s.phase_fractions.stance + s.phase_fractions.swing - 100.0).abs() < 1e-6);
        assert_eq!(s.parameter("cadence").unwrap().mean, 120.0);
    }

    #[test]
    fn no_cycles_is_an_error() {
        assert_eq!(summarize(&[]), Err(SummaryError::NoCycles));
    }

    #[test]
    fn single_foot_omits_p_values() {
        let cycles = vec![cycle(FootSide::Left, 0, 1000, 0.6), cycle(FootSide::Left, 1000, 1000, 0.6)];
        let s = summarize(&cycles).unwrap();
        assert!(s.parameters.iter().all(|p| p.p_value.is_none() && p.mean_right.is_none()));
    }

    #[test]
    fn degenerate_cycles_are_counted() {
        let mut bad = cycle(FootSide::Left, 0, 1000, 0.6);
        bad.next_hs_ms = bad.hs_ms;
        let s = summarize(&[bad, cycle(FootSide::Left, 1000, 1000, 0.6)]).unwrap();
        assert_eq!(s.discarded_count, 1);
        assert_eq!(s.cycle_count.left, 1);
    }

    #[test]
    fn session_cadence_counts_steps() {
        assert_eq!(session_cadence(&[0, 500, 1000, 1500, 2000]), Some(120.0));
        assert_eq!(session_cadence(&[100]), None);
    }
}
