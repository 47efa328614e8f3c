//! Stream curation: ordering, de-duplication, gap splitting, uniform resampling and
//! per-sensor baseline removal.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{FootSide, SensorFrame, SENSOR_COUNT};
use crate::stats::percentile_lower;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CurationError {
    #[error("no frames to curate")]
    EmptyInput,
    #[error("{dropped} of {total} frames carry non-finite values")]
    NonFiniteData { dropped: usize, total: usize },
    #[error("frames from both feet passed to a single-foot curation")]
    MixedFeet,
    #[error("target rate must be positive and finite, got {0}")]
    BadRate(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurationConfig {
    /// Inter-sample spacing above which the stream is split.
    pub gap_threshold_ms: u64,
    /// Per-sensor percentile removed as baseline; `None` keeps absolute pressures.
    pub baseline_percentile: Option<f64>,
    /// Largest tolerated fraction of frames dropped for non-finite values.
    pub max_non_finite_fraction: f64,
}

impl CurationConfig {
    /// Settings for recordings without unloaded phases, where a low percentile is body
    /// weight rather than sensor offset.
    pub fn without_baseline() -> Self {
        CurationConfig { baseline_percentile: None, ..Default::default() }
    }
}

impl Default for CurationConfig {
    fn default() -> Self {
        CurationConfig { gap_threshold_ms: 200, baseline_percentile: Some(5.0), max_non_finite_fraction: 0.10 }
    }
}

/// A contiguous, uniformly sampled run of frames for one foot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CuratedSegment {
    pub foot: FootSide,
    pub t0_ms: u64,
    pub rate_hz: f64,
    pub frames: Vec<SensorFrame>,
    /// Excised interval before this segment: (last timestamp of the previous segment,
    /// first timestamp of this one). Empty for the first segment.
    pub gaps: Vec<(u64, u64)>,
    pub dropped_count: usize,
}

impl CuratedSegment {
    pub fn period_ms(&self) -> f64 {
        1000.0 / self.rate_hz
    }

    pub fn duration_ms(&self) -> f64 {
        self.frames.len() as f64 * self.period_ms()
    }
}

/// Grid timestamp k steps after `t0`, rounded to the millisecond.
pub fn grid_time(t0: u64, k: usize, period_ms: f64) -> u64 {
    t0 + (k as f64 * period_ms).round() as u64
}

fn channel_values(f: &SensorFrame) -> impl Iterator<Item = f64> + '_ {
    f.pressure.iter().chain(&f.accel).chain(&f.gyro).chain(&f.mag).copied()
}

/// Total order used to make de-duplication independent of arrival order.
fn frame_order(a: &SensorFrame, b: &SensorFrame) -> Ordering {
    a.t_ms.cmp(&b.t_ms).then(a.seq.cmp(&b.seq)).then_with(|| {
        channel_values(a)
            .zip(channel_values(b))
            .map(|(x, y)| x.total_cmp(&y))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    })
}

fn lerp(a: f64, b: f64, w: f64) -> f64 {
    a + (b - a) * w
}

fn lerp_array<const N: usize>(a: &[f64; N], b: &[f64; N], w: f64) -> [f64; N] {
    std::array::from_fn(|i| lerp(a[i], b[i], w))
}

/// Resamples a sorted, de-duplicated run onto the uniform grid starting at its first
/// timestamp. Grid points that coincide with a source sample reproduce it exactly.
fn resample(run: &[SensorFrame], period_ms: f64) -> Vec<SensorFrame> {
    let t0 = run[0].t_ms;
    let t_end = run[run.len() - 1].t_ms;
    let mut out = Vec::new();
    let mut j = 0;
    for k in 0.. {
        let t = grid_time(t0, k, period_ms);
        if t > t_end {
            break;
        }
        while j + 1 < run.len() && run[j + 1].t_ms <= t {
            j += 1;
        }
        let a = &run[j];
        let frame = if a.t_ms == t || j + 1 == run.len() {
            SensorFrame { t_ms: t, ..a.clone() }
        } else {
            let b = &run[j + 1];
            let w = (t - a.t_ms) as f64 / (b.t_ms - a.t_ms) as f64;
            SensorFrame {
                foot: a.foot,
                seq: a.seq,
                t_ms: t,
                pressure: lerp_array(&a.pressure, &b.pressure, w),
                accel: lerp_array(&a.accel, &b.accel, w),
                gyro: lerp_array(&a.gyro, &b.gyro, w),
                mag: lerp_array(&a.mag, &b.mag, w),
            }
        };
        out.push(frame);
    }
    out
}

pub fn curate(frames: &[SensorFrame], target_rate_hz: f64) -> Result<Vec<CuratedSegment>, CurationError> {
    curate_with(frames, target_rate_hz, &CurationConfig::default())
}

pub fn curate_with(
    frames: &[SensorFrame],
    target_rate_hz: f64,
    cfg: &CurationConfig,
) -> Result<Vec<CuratedSegment>, CurationError> {
    if frames.is_empty() {
        return Err(CurationError::EmptyInput);
    }
    if !(target_rate_hz.is_finite() && target_rate_hz > 0.0) {
        return Err(CurationError::BadRate(target_rate_hz));
    }
    let foot = frames[0].foot;
    if frames.iter().any(|f| f.foot != foot) {
        return Err(CurationError::MixedFeet);
    }

    let total = frames.len();
    let mut kept: Vec<SensorFrame> = frames.iter().filter(|f| f.is_finite()).cloned().collect();
    let mut dropped_at: Vec<u64> = frames.iter().filter(|f| !f.is_finite()).map(|f| f.t_ms).collect();
    if dropped_at.len() as f64 > cfg.max_non_finite_fraction * total as f64 {
        return Err(CurationError::NonFiniteData { dropped: dropped_at.len(), total });
    }
    if kept.is_empty() {
        return Err(CurationError::EmptyInput);
    }
    for f in &mut kept {
        for p in &mut f.pressure {
            *p = p.max(0.0);
        }
    }

    kept.sort_by(frame_order);
    let mut unique: Vec<SensorFrame> = Vec::with_capacity(kept.len());
    for f in kept {
        match unique.last() {
            Some(prev) if prev.t_ms == f.t_ms => dropped_at.push(f.t_ms),
            _ => unique.push(f),
        }
    }

    let period = 1000.0 / target_rate_hz;
    let mut segments: Vec<CuratedSegment> = Vec::new();
    let mut start = 0;
    for i in 1..=unique.len() {
        let split = i == unique.len() || unique[i].t_ms - unique[i - 1].t_ms > cfg.gap_threshold_ms;
        if !split {
            continue;
        }
        let resampled = resample(&unique[start..i], period);
        let gaps = match segments.last() {
            Some(prev) => {
                let prev_end = prev.frames.last().map(|f| f.t_ms).unwrap_or(prev.t0_ms);
                vec![(prev_end, resampled[0].t_ms)]
            }
            None => Vec::new(),
        };
        segments.push(CuratedSegment {
            foot,
            t0_ms: resampled[0].t_ms,
            rate_hz: target_rate_hz,
            frames: resampled,
            gaps,
            dropped_count: 0,
        });
        start = i;
    }

    for t in dropped_at {
        let idx = segments.iter().rposition(|s| s.t0_ms <= t).unwrap_or(0);
        segments[idx].dropped_count += 1;
    }

    if let Some(q) = cfg.baseline_percentile {
        subtract_baseline(&mut segments, q);
    }
    Ok(segments)
}

fn subtract_baseline(segments: &mut [CuratedSegment], percentile: f64) {
    for sensor in 0..SENSOR_COUNT {
        let values: Vec<f64> = segments.iter().flat_map(|s| s.frames.iter().map(move |f| f.pressure[sensor])).collect();
        let baseline = percentile_lower(&values, percentile);
        if baseline == 0.0 {
            continue;
        }
        for f in segments.iter_mut().flat_map(|s| s.frames.iter_mut()) {
            f.pressure[sensor] = (f.pressure[sensor] - baseline).max(0.0);
        }
    }
}

/// All frames of curated segments, in order.
pub fn flatten(segments: &[CuratedSegment]) -> Vec<SensorFrame> {
    segments.iter().flat_map(|s| s.frames.iter().cloned()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;

    fn frame(t: u64, p0: f64) -> SensorFrame {
        let mut f = SensorFrame::zeroed(FootSide::Left, t as u32, t);
        f.pressure[0] = p0;
        f.pressure[5] = 10.0 + p0 * 0.5;
        f.gyro[2] = p0 / 3.0;
        f
    }

    /// Brute-force linear interpolation over an unsorted sample list.
    fn oracle_interp(samples: &[(u64, f64)], t: u64) -> f64 {
        let before = samples.iter().filter(|s| s.0 <= t).max_by_key(|s| s.0).unwrap();
        let after = samples.iter().filter(|s| s.0 >= t).min_by_key(|s| s.0).unwrap();
        if before.0 == after.0 {
            return before.1;
        }
        let frac = (t - before.0) as f64 / (after.0 - before.0) as f64;
        before.1 * (1.0 - frac) + after.1 * frac
    }

    #[test]
    fn empty_input_is_an_error() {
        assert_eq!(curate(&[], 100.0), Err(CurationError::EmptyInput));
    }

    #[test]
    fn uniform_stream_is_a_fixed_point() {
        let frames: Vec<_> = (0..100).map(|k| frame(k * 10, 50.0 + k as f64)).collect();
        let segs = curate(&frames, 100.0).unwrap();
        assert_eq!(segs.len(), 1);
        assert!(segs[0].gaps.is_empty());
        // the 5th percentile of sensor 0 is its 5th value (54), sensor 5 is 10 + 27
        let b0 = 54.0;
        let b5 = 10.0 + 54.0 * 0.5;
        for (out, inp) in segs[0].frames.iter().zip(&frames) {
            assert_eq!(out.t_ms, inp.t_ms);
            assert_eq!(out.seq, inp.seq);
            assert_eq!(out.pressure[0], (inp.pressure[0] - b0).max(0.0));
            assert_eq!(out.pressure[5], (inp.pressure[5] - b5).max(0.0));
            assert_eq!(out.gyro, inp.gyro);
        }
    }

    #[test]
    fn hole_splits_into_two_segments() {
        let mut frames: Vec<_> = (0..50).map(|k| frame(k * 10, 0.0)).collect();
        frames.extend((0..50).map(|k| frame(990 + k * 10, 0.0)));
        let segs = curate(&frames, 100.0).unwrap();
        assert_eq!(segs.len(), 2);
        assert_eq!(segs[1].gaps, vec![(490, 990)]);
        assert_eq!(segs[0].frames.len(), 50);
        assert_eq!(segs[1].t0_ms, 990);
    }

    #[test]
    fn jittered_timestamps_match_interpolation_oracle() {
        let ts = [0u64, 9, 21, 30, 41, 50];
        let vals = [100.0, 130.0, 90.0, 160.0, 120.0, 200.0];
        let frames: Vec<_> = ts.iter().zip(vals).map(|(&t, v)| frame(t, v)).collect();
        let cfg = CurationConfig { baseline_percentile: Some(0.0), ..Default::default() };
        let segs = curate_with(&frames, 100.0, &cfg).unwrap();
        assert_eq!(segs.len(), 1);
        let grid: Vec<u64> = segs[0].frames.iter().map(|f| f.t_ms).collect();
        assert_eq!(grid, vec![0, 10, 20, 30, 40, 50]);

        let samples: Vec<(u64, f64)> = ts.iter().copied().zip(vals).collect();
        // baseline at percentile 0 is the minimum of the resampled values
        let baseline = grid.iter().map(|&t| oracle_interp(&samples, t)).fold(f64::INFINITY, f64::min);
        for f in &segs[0].frames {
            let expected = oracle_interp(&samples, f.t_ms) - baseline;
            assert!((f.pressure[0] - expected).abs() < 1e-9, "t={} {} vs {}", f.t_ms, f.pressure[0], expected);
            let g = oracle_interp(&samples, f.t_ms) / 3.0;
            assert!((f.gyro[2] - g).abs() < 1e-9);
        }
    }

    #[test]
    fn duplicates_collapse_and_are_counted() {
        let mut frames: Vec<_> = (0..10).map(|k| frame(k * 10, 1.0)).collect();
        frames.push(frame(30, 1.0));
        frames.push(frame(50, 1.0));
        let segs = curate(&frames, 100.0).unwrap();
        assert_eq!(segs[0].frames.len(), 10);
        assert_eq!(segs[0].dropped_count, 2);
    }

    #[test]
    fn non_finite_frames_are_dropped_up_to_the_limit() {
        let mut frames: Vec<_> = (0..20).map(|k| frame(k * 10, 1.0)).collect();
        frames[3].pressure[2] = f64::NAN;
        let segs = curate(&frames, 100.0).unwrap();
        assert_eq!(segs[0].dropped_count, 1);
        assert!(segs[0].frames.iter().all(|f| f.is_finite()));

        for f in frames.iter_mut().take(5) {
            f.accel[0] = f64::INFINITY;
        }
        assert_eq!(curate(&frames, 100.0), Err(CurationError::NonFiniteData { dropped: 5, total: 20 }));
    }

    #[test]
    fn mixed_feet_rejected() {
        let mut frames = vec![frame(0, 1.0), frame(10, 1.0)];
        frames[1].foot = FootSide::Right;
        assert_eq!(curate(&frames, 100.0), Err(CurationError::MixedFeet));
    }

    #[test]
    fn non_integer_period_stays_within_half_ms() {
        let frames: Vec<_> = (0..200).map(|k| frame(k * 7, k as f64)).collect();
        let segs = curate(&frames, 30.0).unwrap();
        for (k, f) in segs[0].frames.iter().enumerate() {
            let exact = k as f64 * 1000.0 / 30.0;
            assert!((f.t_ms as f64 - exact).abs() <= 0.5);
        }
    }

    fn messy_stream() -> impl Strategy<Value = Vec<SensorFrame>> {
        prop::collection::vec((0u64..4, 0.0f64..500.0, any::<bool>()), 2..120).prop_map(|steps| {
            let mut t = 0;
            let mut out = Vec::new();
            for (i, (dt_kind, p, dup)) in steps.into_iter().enumerate() {
                t += match dt_kind {
                    0 => 7,
                    1 => 10,
                    2 => 13,
                    _ => 260,
                };
                let mut f = frame(t, p);
                f.seq = i as u32;
                if dup {
                    out.push(f.clone());
                }
                out.push(f);
            }
            out
        })
    }

    proptest! {
        #[test]
        fn curation_is_idempotent(frames in messy_stream()) {
            let once = curate(&frames, 100.0).unwrap();
            let twice = curate(&flatten(&once), 100.0).unwrap();
            prop_assert_eq!(once.len(), twice.len());
            for (a, b) in once.iter().zip(&twice) {
                prop_assert_eq!(&a.frames, &b.frames);
                prop_assert_eq!(&a.gaps, &b.gaps);
                prop_assert_eq!(a.t0_ms, b.t0_ms);
            }
        }

        #[test]
        fn curation_is_order_independent(frames in messy_stream(), seed in any::<u64>()) {
            let mut shuffled = frames.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(curate(&frames, 100.0).unwrap(), curate(&shuffled, 100.0).unwrap());
        }

        #[test]
        fn output_grid_is_uniform_and_non_negative(frames in messy_stream()) {
            for seg in curate(&frames, 100.0).unwrap() {
                for (k, f) in seg.frames.iter().enumerate() {
                    prop_assert_eq!(f.t_ms, seg.t0_ms + 10 * k as u64);
                    prop_assert!(f.pressure.iter().all(|&p| p >= 0.0));
                }
            }
        }
    }
}
