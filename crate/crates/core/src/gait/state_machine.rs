//! Foot-state machine turning contact samples into gait events.
//!
//! Canonical path: Swing →(heel)→ HeelContact →(heel+fore)→ FootFlat →(fore)→ HeelRise
//! →(none)→ Swing, emitting HeelStrike, FootFlat, HeelRise and ToeOff. Any other path
//! marks the current cycle atypical. [`run_state_machine`] flags every event of such a
//! cycle, including those emitted before the irregular transition.

use serde::{Deserialize, Serialize};

use super::contact::ContactSample;
use crate::model::FootSide;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FootState {
    Swing,
    HeelContact,
    FootFlat,
    HeelRise,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    HeelStrike,
    FootFlat,
    HeelRise,
    ToeOff,
}

impl EventKind {
    /// The kind that canonically follows this one.
    pub fn next(self) -> EventKind {
        match self {
            EventKind::HeelStrike => EventKind::FootFlat,
            EventKind::FootFlat => EventKind::HeelRise,
            EventKind::HeelRise => EventKind::ToeOff,
            EventKind::ToeOff => EventKind::HeelStrike,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GaitEvent {
    pub foot: FootSide,
    pub kind: EventKind,
    pub t_ms: u64,
    pub atypical: bool,
}

/// Streaming state machine for one foot.
#[derive(Debug, Clone)]
pub struct FootStateMachine {
    foot: FootSide,
    state: FootState,
    atypical: bool,
}

impl FootStateMachine {
    pub fn new(foot: FootSide) -> Self {
        FootStateMachine { foot, state: FootState::Swing, atypical: false }
    }

    pub fn state(&self) -> FootState {
        self.state
    }

    /// Whether the cycle in progress has left the canonical path.
    pub fn cycle_atypical(&self) -> bool {
        self.atypical
    }

    /// Feeds one contact sample, appending any emitted events to `out`.
    pub fn step(&mut self, heel: bool, fore: bool, t_ms: u64, out: &mut Vec<GaitEvent>) {
        use EventKind::*;
        use FootState as S;

        let (next, events, irregular): (FootState, &[EventKind], bool) = match (self.state, heel, fore) {
            (S::Swing, false, false) => (S::Swing, &[], false),
            (S::Swing, true, false) => (S::HeelContact, &[HeelStrike], false),
            (S::Swing, true, true) => (S::FootFlat, &[HeelStrike, FootFlat], true),
            (S::Swing, false, true) => (S::HeelRise, &[HeelStrike], true),

            (S::HeelContact, true, false) => (S::HeelContact, &[], false),
            (S::HeelContact, true, true) => (S::FootFlat, &[FootFlat], false),
            (S::HeelContact, false, true) => (S::HeelRise, &[HeelRise], true),
            (S::HeelContact, false, false) => (S::Swing, &[ToeOff], true),

            (S::FootFlat, true, true) => (S::FootFlat, &[], false),
            (S::FootFlat, false, true) => (S::HeelRise, &[HeelRise], false),
            (S::FootFlat, true, false) => (S::HeelContact, &[], true),
            (S::FootFlat, false, false) => (S::Swing, &[ToeOff], true),

            (S::HeelRise, false, true) => (S::HeelRise, &[], false),
            (S::HeelRise, false, false) => (S::Swing, &[ToeOff], false),
            (S::HeelRise, true, true) => (S::FootFlat, &[FootFlat], true),
            (S::HeelRise, true, false) => (S::HeelContact, &[], true),
        };
        if self.state == S::Swing && next != S::Swing {
            self.atypical = false;
        }
        self.atypical |= irregular;
        for &kind in events {
            out.push(GaitEvent { foot: self.foot, kind, t_ms, atypical: self.atypical });
        }
        self.state = next;
    }
}

/// Runs the state machine over one foot's contact stream, starting in Swing.
pub fn run_state_machine(foot: FootSide, contacts: &[ContactSample]) -> Vec<GaitEvent> {
    let mut sm = FootStateMachine::new(foot);
    let mut out = Vec::new();
    let mut cycle_start = 0;
    for c in contacts {
        if sm.state() == FootState::Swing {
            cycle_start = out.len();
        }
        sm.step(c.heel_on, c.fore_on, c.t_ms, &mut out);
        if sm.cycle_atypical() {
            for e in &mut out[cycle_start..] {
                e.atypical = true;
            }
        }
    }
    out
}
