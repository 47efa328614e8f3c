//! Butterfly diagram: the body-frame COP trajectory overlaid stride by stride.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::cop::CopPoint;
use crate::gait::GaitCycle;
use crate::model::FootSide;
use crate::stats::{mean, sample_std};

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum ButterflyError {
    #[error("need at least two complete strides, found {0}")]
    InsufficientCycles(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ButterflyDiagram {
    pub polylines: Vec<Vec<CopPoint>>,
    /// Mean anterior-posterior extent of the strides.
    pub height_mm: f64,
    pub symmetry_index: f64,
    /// Spread of the y positions where the trajectory crosses the midline.
    pub crossing_dispersion_mm: f64,
}

/// y positions where consecutive points change side of x = 0, linearly interpolated.
pub fn midline_crossings(line: &[CopPoint]) -> Vec<f64> {
    let mut out = Vec::new();
    for w in line.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if a.x_mm == 0.0 {
            out.push(a.y_mm);
        } else if a.x_mm * b.x_mm < 0.0 {
            let f = a.x_mm / (a.x_mm - b.x_mm);
            out.push(a.y_mm + f * (b.y_mm - a.y_mm));
        }
    }
    out
}

/// `|X₊ − |X₋|| / (0.5·(X₊ + |X₋|))` over the mean per-stride lateral excursions.
pub fn symmetry_index(right_excursion: f64, left_excursion: f64) -> f64 {
    let (r, l) = (right_excursion.max(0.0), left_excursion.abs());
    if r + l == 0.0 {
        return 0.0;
    }
    (r - l).abs() / (0.5 * (r + l))
}

/// Splits a body-frame COP track into strides anchored at left heel strikes.
pub fn butterfly(track: &[CopPoint], cycles: &[GaitCycle]) -> Result<ButterflyDiagram, ButterflyError> {
    let mut polylines: Vec<Vec<CopPoint>> = cycles
        .iter()
        .filter(|c| c.foot == FootSide::Left)
        .map(|c| track.iter().filter(|p| p.t_ms >= c.hs_ms && p.t_ms < c.next_hs_ms).copied().collect::<Vec<_>>())
        .filter(|line| line.len() >= 2)
        .collect();
    polylines.sort_by_key(|l| l[0].t_ms);
    if polylines.len() < 2 {
        return Err(ButterflyError::InsufficientCycles(polylines.len()));
    }

    let extent = |l: &Vec<CopPoint>, f: fn(&CopPoint) -> f64| {
        l.iter().map(f).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
    };
    let heights: Vec<f64> = polylines.iter().map(|l| extent(l, |p| p.y_mm)).map(|(lo, hi)| hi - lo).collect();
    let xs: Vec<(f64, f64)> = polylines.iter().map(|l| extent(l, |p| p.x_mm)).collect();
    let right = mean(&xs.iter().map(|&(_, hi)| hi.max(0.0)).collect::<Vec<_>>());
    let left = mean(&xs.iter().map(|&(lo, _)| lo.min(0.0)).collect::<Vec<_>>());
    let crossings: Vec<f64> = polylines.iter().flat_map(|l| midline_crossings(l)).collect();

    Ok(ButterflyDiagram {
        height_mm: mean(&heights),
        symmetry_index: symmetry_index(right, left),
        crossing_dispersion_mm: sample_std(&crossings),
        polylines,
    })
}
