//! Gait engine: contact detection, foot states, cycles and the walking summary.

pub mod contact;
pub mod cycles;
pub mod state_machine;
pub mod summary;
pub mod turns;
pub mod welch;

pub use contact::{contact_signal, ContactConfig, ContactSample, FloorCompensation};
pub use cycles::{
    compute_parameters, parameters_from_times, segment_cycles, CycleError, CycleParameters, GaitCycle, Segmentation,
};
pub use state_machine::{run_state_machine, EventKind, FootState, FootStateMachine, GaitEvent};
pub use summary::{summarize, PhaseFractions, SummaryError, WalkingSummary};
pub use turns::{detect_turns, merge_turns, Turn, TurnConfig};
pub use welch::{welch_t_test, WelchError};

use serde::{Deserialize, Serialize};

use crate::model::{FootSegments, FootSide, SensorLayout};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkConfig {
    pub contact: ContactConfig,
    /// Turns are detected and the cycles overlapping them excluded when set.
    pub turns: Option<TurnConfig>,
}

impl Default for WalkConfig {
    fn default() -> Self {
        WalkConfig { contact: ContactConfig::default(), turns: Some(TurnConfig::default()) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkAnalysis {
    pub events_left: Vec<GaitEvent>,
    pub events_right: Vec<GaitEvent>,
    pub turns: Vec<Turn>,
    /// Cycles entering the summary.
    pub cycles: Vec<GaitCycle>,
    pub summary: WalkingSummary,
}

/// Events of one foot over all of its segments. Each segment restarts the state
/// machine in Swing.
pub fn detect_events(
    segments: &FootSegments,
    foot: FootSide,
    layout: &SensorLayout,
    cfg: &ContactConfig,
) -> Vec<GaitEvent> {
    segments.get(foot).iter().flat_map(|seg| run_state_machine(foot, &contact_signal(seg, layout, cfg))).collect()
}

fn gaps(segments: &FootSegments) -> Vec<(u64, u64)> {
    FootSide::BOTH.iter().flat_map(|&f| segments.get(f).iter().flat_map(|s| s.gaps.iter().copied())).collect()
}

/// Full walking analysis of curated data. Cycles spanning a data gap are discarded;
/// cycles overlapping a turn are excluded and counted separately.
pub fn analyze_walk(
    segments: &FootSegments,
    layout: &SensorLayout,
    cfg: &WalkConfig,
) -> Result<WalkAnalysis, SummaryError> {
    let events_left = detect_events(segments, FootSide::Left, layout, &cfg.contact);
    let events_right = detect_events(segments, FootSide::Right, layout, &cfg.contact);
    let seg = segment_cycles(&events_left, &events_right);

    let gaps = gaps(segments);
    let turns = match &cfg.turns {
        Some(tc) => merge_turns(
            FootSide::BOTH.iter().flat_map(|&f| segments.get(f).iter().flat_map(|s| detect_turns(s, tc))).collect(),
        ),
        None => Vec::new(),
    };

    let mut discarded = seg.discarded;
    let mut turn_excluded = 0;
    let mut kept = Vec::with_capacity(seg.cycles.len());
    for c in seg.cycles {
        if gaps.iter().any(|&(a, b)| c.hs_ms < b && a < c.next_hs_ms) {
            discarded += 1;
        } else if turns.iter().any(|t| c.overlaps(t.start_ms, t.end_ms)) {
            turn_excluded += 1;
        } else {
            kept.push(c);
        }
    }

    let mut summary = summarize(&kept)?;
    summary.discarded_count += discarded;
    summary.turn_excluded_count = turn_excluded;
    let strikes: Vec<u64> =
        events_left.iter().chain(&events_right).filter(|e| e.kind == EventKind::HeelStrike).map(|e| e.t_ms).collect();
    summary.session_cadence = summary::session_cadence(&strikes);

    Ok(WalkAnalysis { events_left, events_right, turns, cycles: kept, summary })
}
