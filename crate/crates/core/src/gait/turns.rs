//! Turn detection from the insole gyroscope yaw rate.

use serde::{Deserialize, Serialize};

use crate::ingest::CuratedSegment;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TurnConfig {
    /// Yaw-rate magnitude (deg/s) above which the wearer is turning.
    pub yaw_rate_dps: f64,
    pub min_duration_ms: f64,
}

impl Default for TurnConfig {
    fn default() -> Self {
        TurnConfig { yaw_rate_dps: 50.0, min_duration_ms: 300.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub start_ms: u64,
    pub end_ms: u64,
}

/// Intervals where |gyro z| stays above the rate threshold for at least the minimum
/// duration, with duration measured as sample count times the period.
pub fn detect_turns(segment: &CuratedSegment, cfg: &TurnConfig) -> Vec<Turn> {
    let min_samples = (cfg.min_duration_ms / segment.period_ms()).ceil().max(1.0) as usize;
    let mut turns = Vec::new();
    let frames = &segment.frames;
    let mut i = 0;
    while i < frames.len() {
        if frames[i].gyro[2].abs() <= cfg.yaw_rate_dps {
            i += 1;
            continue;
        }
        let run = frames[i..].iter().take_while(|f| f.gyro[2].abs() > cfg.yaw_rate_dps).count();
        if run >= min_samples {
            turns.push(Turn { start_ms: frames[i].t_ms, end_ms: frames[i + run - 1].t_ms });
        }
        i += run;
    }
    turns
}

/// Sorted union of overlapping intervals.
pub fn merge_turns(mut turns: Vec<Turn>) -> Vec<Turn> {
    turns.sort_by_key(|t| t.start_ms);
    let mut out: Vec<Turn> = Vec::with_capacity(turns.len());
    for t in turns {
        match out.last_mut() {
            Some(last) if t.start_ms <= last.end_ms => last.end_ms = last.end_ms.max(t.end_ms),
            _ => out.push(t),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FootSide, SensorFrame};

    fn segment(yaw: impl Fn(u64) -> f64) -> CuratedSegment {
        let frames = (0..500u64)
            .map(|k| {
                let mut f = SensorFrame::zeroed(FootSide::Left, k as u32, k * 10);
                f.gyro[2] = yaw(k * 10);
                f
            })
            .collect();
        CuratedSegment { foot: FootSide::Left, t0_ms: 0, rate_hz: 100.0, frames, gaps: vec![], dropped_count: 0 }
    }

    #[test]
    fn sustained_yaw_is_a_turn() {
        let seg = segment(|t| if (1000..2000).contains(&t) { -90.0 } else { 5.0 });
        assert_eq!(detect_turns(&seg, &TurnConfig::default()), vec![Turn { start_ms: 1000, end_ms: 1990 }]);
    }

    #[test]
    fn brief_yaw_is_not_a_turn() {
        let seg = segment(|t| if (1000..1290).contains(&t) { 120.0 } else { 0.0 });
        assert!(detect_turns(&seg, &TurnConfig::default()).is_empty());
        let seg = segment(|t| if (1000..1300).contains(&t) { 120.0 } else { 0.0 });
        assert_eq!(detect_turns(&seg, &TurnConfig::default()).len(), 1);
    }

    #[test]
    fn overlapping_turns_merge() {
        let merged = merge_turns(vec![
            Turn { start_ms: 500, end_ms: 900 },
            Turn { start_ms: 100, end_ms: 600 },
            Turn { start_ms: 1000, end_ms: 1100 },
        ]);
        assert_eq!(merged, vec![Turn { start_ms: 100, end_ms: 900 }, Turn { start_ms: 1000, end_ms: 1100 }]);
    }
}
