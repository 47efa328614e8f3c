//! Postural sway of a standing recording, eyes open then eyes closed.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::cop::{cop_track, global_track, CopPoint};
use crate::model::{FootSegments, FootSide, SensorFrame, SensorLayout, SessionType};

/// 95% quantile of the chi-square distribution with two degrees of freedom.
pub const CHI2_95_2DOF: f64 = 5.991;

#[derive(Debug, Error, Clone, Copy, PartialEq)]
pub enum SwayError {
    #[error("sway analysis needs a standing balance session")]
    WrongSessionType,
    #[error("recording covers {0:.2} s, sway analysis needs {1:.2} s")]
    TooShort(f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwaySegment {
    EyesOpen,
    EyesClosed,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SwayMetrics {
    pub ml_range_mm: f64,
    pub ap_range_mm: f64,
    pub ml_rms_mm: f64,
    pub ap_rms_mm: f64,
    pub path_length_mm: f64,
    pub mean_velocity_mm_s: f64,
    pub ellipse_area_mm2: f64,
}

/// Mean-subtracted medial-lateral (x) and anterior-posterior (y) deviations.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SwaySeries {
    pub t_ms: Vec<u64>,
    pub ml_mm: Vec<f64>,
    pub ap_mm: Vec<f64>,
    pub metrics: SwayMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwayReport {
    pub segment: SwaySegment,
    pub left: SwaySeries,
    pub right: SwaySeries,
    pub combined: SwaySeries,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwayAnalysis {
    pub eyes_open: SwayReport,
    pub eyes_closed: SwayReport,
    /// Combined path length with eyes closed over eyes open.
    pub romberg_ratio: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwayConfig {
    pub eyes_closed_at_s: f64,
    pub min_duration_s: f64,
    pub stance_width_mm: f64,
}

impl Default for SwayConfig {
    fn default() -> Self {
        SwayConfig { eyes_closed_at_s: 10.0, min_duration_s: 20.0, stance_width_mm: 300.0 }
    }
}

/// 95% confidence ellipse area `π·χ²·sqrt(λ₁λ₂)` from the population covariance.
pub fn ellipse_area(points: &[[f64; 2]]) -> f64 {
    if points.len() < 2 {
        return 0.0;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p[0]).sum::<f64>() / n;
    let my = points.iter().map(|p| p[1]).sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for p in points {
        let (dx, dy) = (p[0] - mx, p[1] - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    let det = (sxx * syy - sxy * sxy) / (n * n);
    std::f64::consts::PI * CHI2_95_2DOF * det.max(0.0).sqrt()
}

pub fn path_length(points: &[[f64; 2]]) -> f64 {
    points.windows(2).map(|w| (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1])).sum()
}

/// Metrics of one COP series sampled at `period_ms`.
pub fn sway_metrics(points: &[[f64; 2]], period_ms: f64) -> SwayMetrics {
    if points.is_empty() {
        return SwayMetrics::default();
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p[0]).sum::<f64>() / n;
    let my = points.iter().map(|p| p[1]).sum::<f64>() / n;
    let range = |i: usize| {
        let (lo, hi) =
            points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p[i]), hi.max(p[i])));
        hi - lo
    };
    let rms = |i: usize, m: f64| (points.iter().map(|p| (p[i] - m).powi(2)).sum::<f64>() / n).sqrt();
    let path = path_length(points);
    let duration_s = (points.len() - 1) as f64 * period_ms / 1000.0;
    SwayMetrics {
        ml_range_mm: range(0),
        ap_range_mm: range(1),
        ml_rms_mm: rms(0, mx),
        ap_rms_mm: rms(1, my),
        path_length_mm: path,
        mean_velocity_mm_s: if duration_s > 0.0 { path / duration_s } else { 0.0 },
        ellipse_area_mm2: ellipse_area(points),
    }
}

fn series(cops: &[CopPoint], period_ms: f64) -> SwaySeries {
    let points: Vec<[f64; 2]> = cops.iter().map(|c| [c.x_mm, c.y_mm]).collect();
    let n = points.len().max(1) as f64;
    let mx = points.iter().map(|p| p[0]).sum::<f64>() / n;
    let my = points.iter().map(|p| p[1]).sum::<f64>() / n;
    SwaySeries {
        t_ms: cops.iter().map(|c| c.t_ms).collect(),
        ml_mm: points.iter().map(|p| p[0] - mx).collect(),
        ap_mm: points.iter().map(|p| p[1] - my).collect(),
        metrics: sway_metrics(&points, period_ms),
    }
}

fn split(cops: Vec<CopPoint>, at_ms: u64) -> (Vec<CopPoint>, Vec<CopPoint>) {
    cops.into_iter().partition(|c| c.t_ms < at_ms)
}

/// Eyes-open and eyes-closed sway per foot and combined. The recording is split
/// `eyes_closed_at_s` after its first frame.
pub fn sway_analysis(
    session_type: SessionType,
    segments: &FootSegments,
    rate_hz: f64,
    layout: &SensorLayout,
    cfg: &SwayConfig,
) -> Result<SwayAnalysis, SwayError> {
    if session_type != SessionType::StandingBalance {
        return Err(SwayError::WrongSessionType);
    }
    let period_ms = 1000.0 / rate_hz;
    let covered = FootSide::BOTH
        .iter()
        .map(|&f| segments.frame_count(f) as f64 * period_ms / 1000.0)
        .fold(f64::INFINITY, f64::min);
    if covered + 1e-9 < cfg.min_duration_s {
        return Err(SwayError::TooShort(covered, cfg.min_duration_s));
    }
    let t0 = FootSide::BOTH.iter().filter_map(|&f| segments.frames(f).next().map(|fr| fr.t_ms)).min().unwrap_or(0);
    let split_ms = t0 + (cfg.eyes_closed_at_s * 1000.0).round() as u64;

    let frames = |f: FootSide| segments.frames(f).cloned().collect::<Vec<SensorFrame>>();
    let (left_frames, right_frames) = (frames(FootSide::Left), frames(FootSide::Right));
    let (l_eo, l_ec) = split(cop_track(&left_frames, layout), split_ms);
    let (r_eo, r_ec) = split(cop_track(&right_frames, layout), split_ms);
    let (g_eo, g_ec) = split(global_track(&left_frames, &right_frames, layout, rate_hz, cfg.stance_width_mm), split_ms);

    let report = |segment, l: &[CopPoint], r: &[CopPoint], g: &[CopPoint]| SwayReport {
        segment,
        left: series(l, period_ms),
        right: series(r, period_ms),
        combined: series(g, period_ms),
    };
    let eyes_open = report(SwaySegment::EyesOpen, &l_eo, &r_eo, &g_eo);
    let eyes_closed = report(SwaySegment::EyesClosed, &l_ec, &r_ec, &g_ec);
    let eo_path = eyes_open.combined.metrics.path_length_mm;
    let romberg_ratio =
        (eo_path > 0.0 && !g_ec.is_empty()).then(|| eyes_closed.combined.metrics.path_length_mm / eo_path);
    Ok(SwayAnalysis { eyes_open, eyes_closed, romberg_ratio })
}
