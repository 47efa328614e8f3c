//! Centre of pressure per insole and in the two-foot body frame.

use serde::{Deserialize, Serialize};

use crate::model::{FootSide, SensorFrame, SensorLayout};

/// Total pressure (kPa summed over sensors) below which no COP is reported.
pub const FORCE_FLOOR: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "frame", content = "foot")]
pub enum CopFrameKind {
    /// Insole coordinates of one foot.
    Local(FootSide),
    /// Body frame with the feet at x = ∓ stance_width / 2.
    Global,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CopPoint {
    pub t_ms: u64,
    pub x_mm: f64,
    pub y_mm: f64,
    pub total_force: f64,
    pub frame: CopFrameKind,
}

pub fn cop_frame(frame: &SensorFrame, layout: &SensorLayout) -> Option<CopPoint> {
    cop_frame_with(frame, layout, FORCE_FLOOR)
}

/// Pressure-weighted mean of the sensor positions.
pub fn cop_frame_with(frame: &SensorFrame, layout: &SensorLayout, floor: f64) -> Option<CopPoint> {
    let total: f64 = frame.pressure.iter().sum();
    if !(total >= floor) || total <= 0.0 {
        return None;
    }
    let (mut sx, mut sy) = (0.0, 0.0);
    for (p, [x, y]) in frame.pressure.iter().zip(&layout.positions) {
        sx += p * x;
        sy += p * y;
    }
    Some(CopPoint {
        t_ms: frame.t_ms,
        x_mm: sx / total,
        y_mm: sy / total,
        total_force: total,
        frame: CopFrameKind::Local(frame.foot),
    })
}

fn to_body(p: &CopPoint, stance_width_mm: f64) -> (f64, f64) {
    let shift = match p.frame {
        CopFrameKind::Local(FootSide::Left) => -stance_width_mm / 2.0,
        CopFrameKind::Local(FootSide::Right) => stance_width_mm / 2.0,
        CopFrameKind::Global => 0.0,
    };
    (p.x_mm + shift, p.y_mm)
}

/// Force-weighted mean of the feet's COPs after placing them in the body frame.
pub fn global_cop(left: Option<&CopPoint>, right: Option<&CopPoint>, stance_width_mm: f64) -> Option<CopPoint> {
    let present: Vec<&CopPoint> = [left, right].into_iter().flatten().collect();
    let total: f64 = present.iter().map(|p| p.total_force).sum();
    if present.is_empty() || total <= 0.0 {
        return None;
    }
    let (mut sx, mut sy) = (0.0, 0.0);
    for p in &present {
        let (x, y) = to_body(p, stance_width_mm);
        sx += p.total_force * x;
        sy += p.total_force * y;
    }
    Some(CopPoint {
        t_ms: present[0].t_ms,
        x_mm: sx / total,
        y_mm: sy / total,
        total_force: total,
        frame: CopFrameKind::Global,
    })
}

/// Local COP track of one foot; `layout` is the committed (right) table.
pub fn cop_track<'a>(frames: impl IntoIterator<Item = &'a SensorFrame>, layout: &SensorLayout) -> Vec<CopPoint> {
    let mut per_foot: Option<(FootSide, SensorLayout)> = None;
    frames
        .into_iter()
        .filter_map(|f| {
            let l = match &per_foot {
                Some((foot, l)) if *foot == f.foot => l,
                _ => &per_foot.insert((f.foot, layout.for_foot(f.foot))).1,
            };
            cop_frame(f, l)
        })
        .collect()
}

/// Joins both feet's frames on time and returns the body-frame COP track. Frames are
/// paired when their timestamps differ by at most half a sample period; unpaired
/// frames contribute alone.
pub fn global_track(
    left: &[SensorFrame],
    right: &[SensorFrame],
    layout: &SensorLayout,
    rate_hz: f64,
    stance_width_mm: f64,
) -> Vec<CopPoint> {
    let (ll, rl) = (layout.for_foot(FootSide::Left), layout.for_foot(FootSide::Right));
    let half = 500.0 / rate_hz;
    let mut out = Vec::with_capacity(left.len().max(right.len()));
    let (mut i, mut j) = (0, 0);
    while i < left.len() || j < right.len() {
        let (l, r) = match (left.get(i), right.get(j)) {
            (Some(l), Some(r)) if (l.t_ms as f64 - r.t_ms as f64).abs() <= half => {
                i += 1;
                j += 1;
                (Some(l), Some(r))
            }
            (Some(l), Some(r)) if l.t_ms < r.t_ms => {
                i += 1;
                (Some(l), None)
            }
            (Some(_), Some(r)) => {
                j += 1;
                (None, Some(r))
            }
            (Some(l), None) => {
                i += 1;
                (Some(l), None)
            }
            (None, r) => {
                j += 1;
                (None, r)
            }
        };
        let lc = l.and_then(|f| cop_frame(f, &ll));
        let rc = r.and_then(|f| cop_frame(f, &rl));
        if let Some(mut g) = global_cop(lc.as_ref(), rc.as_ref(), stance_width_mm) {
            g.t_ms = l.or(r).map(|f| f.t_ms).unwrap_or(g.t_ms);
            out.push(g);
        }
    }
    out
}
