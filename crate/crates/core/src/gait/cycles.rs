//! Gait-cycle segmentation and per-cycle parameters.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::state_machine::{EventKind, GaitEvent};
use crate::model::FootSide;

/// One stride of one foot, heel strike to the next heel strike.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GaitCycle {
    pub foot: FootSide,
    pub hs_ms: u64,
    pub ff_ms: u64,
    pub hr_ms: u64,
    pub to_ms: u64,
    pub next_hs_ms: u64,
    pub opposite_hs_ms: u64,
    pub opposite_to_ms: u64,
    pub atypical: bool,
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum CycleError {
    #[error("degenerate cycle starting at {0} ms")]
    DegenerateCycle(u64),
}

impl GaitCycle {
    /// Ordering required for the phase arithmetic:
    /// `hs ≤ ff ≤ hr ≤ to < next_hs` and `hs ≤ opp_to ≤ opp_hs ≤ to`.
    pub fn is_well_ordered(&self) -> bool {
        self.hs_ms < self.next_hs_ms
            && self.hs_ms <= self.ff_ms
            && self.ff_ms <= self.hr_ms
            && self.hr_ms <= self.to_ms
            && self.hs_ms < self.to_ms
            && self.to_ms < self.next_hs_ms
            && self.hs_ms <= self.opposite_to_ms
            && self.opposite_to_ms <= self.opposite_hs_ms
            && self.opposite_hs_ms <= self.to_ms
    }

    pub fn overlaps(&self, start_ms: u64, end_ms: u64) -> bool {
        self.hs_ms <= end_ms && start_ms < self.next_hs_ms
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Segmentation {
    pub cycles: Vec<GaitCycle>,
    /// Candidate cycles dropped for missing or mis-ordered events.
    pub discarded: usize,
}

fn first_in(events: &[GaitEvent], kind: EventKind, from: u64, to_exclusive: u64) -> Option<&GaitEvent> {
    events.iter().find(|e| e.kind == kind && e.t_ms >= from && e.t_ms < to_exclusive)
}

fn segment_foot(own: &[GaitEvent], other: &[GaitEvent], out: &mut Segmentation) {
    let strikes: Vec<&GaitEvent> = own.iter().filter(|e| e.kind == EventKind::HeelStrike).collect();
    for pair in strikes.windows(2) {
        let (hs, next) = (pair[0], pair[1]);
        let window: Vec<&GaitEvent> = own.iter().filter(|e| e.t_ms >= hs.t_ms && e.t_ms < next.t_ms).collect();
        let own_first = |kind| window.iter().find(|e| e.kind == kind).copied();
        let Some(to) = own_first(EventKind::ToeOff) else {
            out.discarded += 1;
            continue;
        };
        let (ff, hr) = match (own_first(EventKind::FootFlat), own_first(EventKind::HeelRise)) {
            (Some(ff), Some(hr)) => (ff, hr),
            _ => {
                out.discarded += 1;
                continue;
            }
        };
        let opp_to = first_in(other, EventKind::ToeOff, hs.t_ms, next.t_ms);
        let opp_hs = first_in(other, EventKind::HeelStrike, hs.t_ms, next.t_ms);
        let (Some(opp_to), Some(opp_hs)) = (opp_to, opp_hs) else {
            out.discarded += 1;
            continue;
        };
        let cycle = GaitCycle {
            foot: hs.foot,
            hs_ms: hs.t_ms,
            ff_ms: ff.t_ms,
            hr_ms: hr.t_ms,
            to_ms: to.t_ms,
            next_hs_ms: next.t_ms,
            opposite_hs_ms: opp_hs.t_ms,
            opposite_to_ms: opp_to.t_ms,
            atypical: window.iter().any(|e| e.atypical),
        };
        if cycle.is_well_ordered() {
            out.cycles.push(cycle);
        } else {
            out.discarded += 1;
        }
    }
}

/// Builds one cycle per consecutive heel-strike pair of each foot. Events must be
/// time-sorted. Strides lacking their own or contralateral events are counted as
/// discarded; the partial strides before the first and after the last heel strike
/// never form candidates.
pub fn segment_cycles(left: &[GaitEvent], right: &[GaitEvent]) -> Segmentation {
    let mut out = Segmentation::default();
    segment_foot(left, right, &mut out);
    segment_foot(right, left, &mut out);
    out.cycles.sort_by_key(|c| (c.hs_ms, c.foot));
    out
}

/// The eight walking-summary parameters of one cycle. Percentages are of cycle time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleParameters {
    pub cycle_time_s: f64,
    pub cadence_steps_per_min: f64,
    pub stance_pct: f64,
    pub single_support_pct: f64,
    pub double_support_pct: f64,
    pub load_response_pct: f64,
    pub pre_swing_pct: f64,
    pub terminal_stance_pct: f64,
}

impl CycleParameters {
    pub const NAMES: [&'static str; 8] = [
        "cycle_time",
        "cadence",
        "stance",
        "single_support",
        "double_support",
        "load_response",
        "pre_swing",
        "terminal_stance",
    ];

    pub const UNITS: [&'static str; 8] = ["s", "steps/min", "%", "%", "%", "%", "%", "%"];

    /// Values in the order of [`Self::NAMES`].
    pub fn values(&self) -> [f64; 8] {
        [
            self.cycle_time_s,
            self.cadence_steps_per_min,
            self.stance_pct,
            self.single_support_pct,
            self.double_support_pct,
            self.load_response_pct,
            self.pre_swing_pct,
            self.terminal_stance_pct,
        ]
    }

    pub fn swing_pct(&self) -> f64 {
        100.0 - self.stance_pct
    }
}

pub fn compute_parameters(cycle: &GaitCycle) -> Result<CycleParameters, CycleError> {
    if !cycle.is_well_ordered() {
        return Err(CycleError::DegenerateCycle(cycle.hs_ms));
    }
    let c = cycle;
    Ok(parameters_from_times(
        [c.hs_ms, c.hr_ms, c.to_ms, c.next_hs_ms, c.opposite_hs_ms, c.opposite_to_ms].map(|t| t as f64),
    ))
}

/// Parameters from event times in ms: `[hs, hr, to, next_hs, opposite_hs, opposite_to]`.
/// The caller guarantees the ordering checked by [`GaitCycle::is_well_ordered`].
pub fn parameters_from_times([hs, hr, to, next_hs, opp_hs, opp_to]: [f64; 6]) -> CycleParameters {
    let period = next_hs - hs;
    let pct = |a: f64, b: f64| (b - a) / period * 100.0;

    let stance = pct(hs, to);
    let load_response = pct(hs, opp_to);
    let pre_swing = pct(opp_hs, to);
    let double_support = load_response + pre_swing;
    // Heel rise can trail the contralateral strike in flat-footed gait; the phase is then empty.
    let terminal_stance = pct(hr, opp_hs).max(0.0);
    let cycle_time_s = period / 1000.0;
    CycleParameters {
        cycle_time_s,
        cadence_steps_per_min: 120.0 / cycle_time_s,
        stance_pct: stance,
        single_support_pct: stance - double_support,
        double_support_pct: double_support,
        load_response_pct: load_response,
        pre_swing_pct: pre_swing,
        terminal_stance_pct: terminal_stance,
    }
}
