//! Balance and COP engine: centre of pressure, heatmaps, butterfly diagrams and sway.

pub mod butterfly;
pub mod cop;
pub mod heatmap;
pub mod sway;

pub use butterfly::{butterfly, ButterflyDiagram, ButterflyError};
pub use cop::{cop_frame, cop_frame_with, cop_track, global_cop, global_track, CopFrameKind, CopPoint, FORCE_FLOOR};
pub use heatmap::{
    cop_occupancy_heatmap, plantar_heatmap, Heatmap, HeatmapError, HeatmapKind, OccupancyGrid, PlantarGrid,
};
pub use sway::{
    ellipse_area, sway_analysis, sway_metrics, SwayAnalysis, SwayConfig, SwayError, SwayMetrics, SwayReport,
    SwaySegment, SwaySeries,
};

/// Body-frame distance between the insole centre lines while walking.
pub const WALKING_STANCE_WIDTH_MM: f64 = 200.0;
/// Same, for the standing protocol.
pub const STANDING_STANCE_WIDTH_MM: f64 = 300.0;
