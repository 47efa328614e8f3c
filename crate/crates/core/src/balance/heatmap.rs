//! Plantar-pressure and COP-occupancy heatmaps.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::cop::CopPoint;
use crate::model::{SensorFrame, SensorLayout, SENSOR_COUNT};

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum HeatmapError {
    #[error("no frames to average")]
    EmptySession,
    #[error("no COP points")]
    NoData,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeatmapKind {
    PlantarPressure,
    CopOccupancy,
}

/// Row-major grid; row `j` covers y from `origin[1] + j·cell[1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub kind: HeatmapKind,
    pub width: usize,
    pub height: usize,
    pub cell_size_mm: [f64; 2],
    pub origin_mm: [f64; 2],
    pub values: Vec<f64>,
}

impl Heatmap {
    pub fn at(&self, col: usize, row: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn cell_center(&self, col: usize, row: usize) -> [f64; 2] {
        [
            self.origin_mm[0] + (col as f64 + 0.5) * self.cell_size_mm[0],
            self.origin_mm[1] + (row as f64 + 0.5) * self.cell_size_mm[1],
        ]
    }

    /// Cell containing a point, clamped to the grid.
    pub fn cell_of(&self, x: f64, y: f64) -> (usize, usize) {
        let c = ((x - self.origin_mm[0]) / self.cell_size_mm[0]).floor().clamp(0.0, (self.width - 1) as f64);
        let r = ((y - self.origin_mm[1]) / self.cell_size_mm[1]).floor().clamp(0.0, (self.height - 1) as f64);
        (c as usize, r as usize)
    }

    pub fn argmax(&self) -> (usize, usize) {
        let i = self.values.iter().enumerate().fold(0, |best, (i, &v)| if v > self.values[best] { i } else { best });
        (i % self.width, i / self.width)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Scales so the largest cell is 1; an all-zero grid is left as is.
    fn normalize(&mut self) {
        let m = self.max();
        if m > 0.0 {
            for v in &mut self.values {
                *v /= m;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantarGrid {
    pub width: usize,
    pub height: usize,
    pub sigma_mm: f64,
    /// Half-width of the insole bounding box.
    pub half_width_mm: f64,
}

impl Default for PlantarGrid {
    fn default() -> Self {
        PlantarGrid { width: 32, height: 96, sigma_mm: 10.0, half_width_mm: 60.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OccupancyGrid {
    pub width: usize,
    pub height: usize,
    pub sigma_mm: f64,
    pub margin_mm: f64,
}

impl Default for OccupancyGrid {
    fn default() -> Self {
        OccupancyGrid { width: 64, height: 64, sigma_mm: 3.0, margin_mm: 10.0 }
    }
}

/// Time-averaged pressure per sensor.
pub fn mean_pressures(frames: &[SensorFrame]) -> [f64; SENSOR_COUNT] {
    let mut mean = [0.0; SENSOR_COUNT];
    for f in frames {
        for (m, p) in mean.iter_mut().zip(&f.pressure) {
            *m += p;
        }
    }
    for m in &mut mean {
        *m /= frames.len().max(1) as f64;
    }
    mean
}

/// Gaussian splat of per-sensor intensities at cell centres, not normalized.
pub fn plantar_density(intensity: &[f64; SENSOR_COUNT], layout: &SensorLayout, grid: &PlantarGrid) -> Heatmap {
    let cell = [2.0 * grid.half_width_mm / grid.width as f64, layout.length_mm / grid.height as f64];
    let mut map = Heatmap {
        kind: HeatmapKind::PlantarPressure,
        width: grid.width,
        height: grid.height,
        cell_size_mm: cell,
        origin_mm: [-grid.half_width_mm, 0.0],
        values: vec![0.0; grid.width * grid.height],
    };
    let two_s2 = 2.0 * grid.sigma_mm * grid.sigma_mm;
    for row in 0..grid.height {
        for col in 0..grid.width {
            let [cx, cy] = map.cell_center(col, row);
            map.values[row * grid.width + col] = intensity
                .iter()
                .zip(&layout.positions)
                .map(|(w, [x, y])| w * (-((cx - x).powi(2) + (cy - y).powi(2)) / two_s2).exp())
                .sum();
        }
    }
    map
}

/// Mean plantar pressure of one foot, max-normalized. `layout` must match the foot.
pub fn plantar_heatmap(
    frames: &[SensorFrame],
    layout: &SensorLayout,
    grid: &PlantarGrid,
) -> Result<Heatmap, HeatmapError> {
    if frames.is_empty() {
        return Err(HeatmapError::EmptySession);
    }
    let mut map = plantar_density(&mean_pressures(frames), layout, grid);
    map.normalize();
    Ok(map)
}

fn gaussian_kernel(sigma_cells: f64) -> Vec<f64> {
    let radius = (3.0 * sigma_cells).ceil().max(1.0) as isize;
    (-radius..=radius).map(|k| (-(k * k) as f64 / (2.0 * sigma_cells * sigma_cells)).exp()).collect()
}

fn convolve_rows(values: &[f64], width: usize, height: usize, kernel: &[f64]) -> Vec<f64> {
    let r = (kernel.len() / 2) as isize;
    let mut out = vec![0.0; values.len()];
    for row in 0..height {
        for col in 0..width {
            let mut acc = 0.0;
            for (k, w) in kernel.iter().enumerate() {
                let c = col as isize + k as isize - r;
                if (0..width as isize).contains(&c) {
                    acc += w * values[row * width + c as usize];
                }
            }
            out[row * width + col] = acc;
        }
    }
    out
}

fn transpose(values: &[f64], width: usize, height: usize) -> Vec<f64> {
    let mut out = vec![0.0; values.len()];
    for row in 0..height {
        for col in 0..width {
            out[col * height + row] = values[row * width + col];
        }
    }
    out
}

/// Histogram of COP positions over their bounding box plus margin, smoothed with a
/// separable Gaussian and max-normalized.
pub fn cop_occupancy_heatmap(cops: &[CopPoint], grid: &OccupancyGrid) -> Result<Heatmap, HeatmapError> {
    if cops.is_empty() {
        return Err(HeatmapError::NoData);
    }
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in cops {
        x0 = x0.min(p.x_mm);
        x1 = x1.max(p.x_mm);
        y0 = y0.min(p.y_mm);
        y1 = y1.max(p.y_mm);
    }
    let origin = [x0 - grid.margin_mm, y0 - grid.margin_mm];
    let cell =
        [(x1 - x0 + 2.0 * grid.margin_mm) / grid.width as f64, (y1 - y0 + 2.0 * grid.margin_mm) / grid.height as f64];
    let mut map = Heatmap {
        kind: HeatmapKind::CopOccupancy,
        width: grid.width,
        height: grid.height,
        cell_size_mm: cell,
        origin_mm: origin,
        values: vec![0.0; grid.width * grid.height],
    };
    for p in cops {
        let (c, r) = map.cell_of(p.x_mm, p.y_mm);
        map.values[r * grid.width + c] += 1.0;
    }
    let rows = convolve_rows(&map.values, grid.width, grid.height, &gaussian_kernel(grid.sigma_mm / cell[0]));
    let cols = convolve_rows(
        &transpose(&rows, grid.width, grid.height),
        grid.height,
        grid.width,
        &gaussian_kernel(grid.sigma_mm / cell[1]),
    );
    map.values = transpose(&cols, grid.height, grid.width);
    map.normalize();
    Ok(map)
}
