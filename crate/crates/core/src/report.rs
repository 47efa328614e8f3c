//! Report payloads and the analysis pipeline that produces them from raw frames.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::balance::{
    butterfly, cop_occupancy_heatmap, global_track, plantar_heatmap, sway_analysis, ButterflyDiagram, CopPoint,
    Heatmap, OccupancyGrid, PlantarGrid, SwayAnalysis, SwayConfig, SwayError, WALKING_STANCE_WIDTH_MM,
};
use crate::decision::cohort::PLACEHOLDER_NOTICE;
use crate::decision::{extract_features, predict_binary, predict_severity, FeatureVector, TreeEnsembleModel};
use crate::gait::{analyze_walk, CycleParameters, GaitCycle, GaitEvent, Turn, WalkConfig, WalkingSummary};
use crate::ingest::{curate_with, flatten, CuratedSegment, CurationConfig, CurationError};
use crate::model::{FootSegments, FootSide, SensorFrame, SensorLayout, SessionType, SENSOR_COUNT};

pub const SCHEMA_VERSION: u32 = 1;
pub const ENGINE_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportKind {
    RawSensor,
    WalkingSummary,
    Balance,
    AiAssessment,
}

impl ReportKind {
    pub const ALL: [ReportKind; 4] =
        [ReportKind::RawSensor, ReportKind::WalkingSummary, ReportKind::Balance, ReportKind::AiAssessment];

    pub fn as_str(self) -> &'static str {
        match self {
            ReportKind::RawSensor => "raw_sensor",
            ReportKind::WalkingSummary => "walking_summary",
            ReportKind::Balance => "balance",
            ReportKind::AiAssessment => "ai_assessment",
        }
    }

    /// Path segment under `/sessions/{id}/reports/`.
    pub fn route(self) -> &'static str {
        match self {
            ReportKind::RawSensor => "raw",
            ReportKind::WalkingSummary => "walking",
            ReportKind::Balance => "balance",
            ReportKind::AiAssessment => "ai",
        }
    }

    pub fn from_route(s: &str) -> Option<ReportKind> {
        ReportKind::ALL.into_iter().find(|k| k.route() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawFoot {
    pub foot: FootSide,
    pub t_ms: Vec<u64>,
    /// One series per sensor index.
    pub pressure: Vec<Vec<f64>>,
    /// Missing intervals `[start, end)` in milliseconds.
    pub gaps: Vec<(u64, u64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSensorPayload {
    pub schema_version: u32,
    pub sample_rate_hz: f64,
    pub feet: Vec<RawFoot>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedSeries {
    pub name: String,
    pub sensor: usize,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawProjection {
    pub foot: FootSide,
    pub t_ms: Vec<u64>,
    pub series: Vec<NamedSeries>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProjectionError {
    #[error("sensor index {0} out of range")]
    SensorOutOfRange(usize),
    #[error("no data for the {0} foot")]
    NoFoot(FootSide),
}

impl RawSensorPayload {
    pub fn from_segments(segments: &FootSegments, sample_rate_hz: f64) -> Self {
        let feet = FootSide::BOTH
            .iter()
            .map(|&foot| {
                let segs = segments.get(foot);
                let frames = flatten(segs);
                RawFoot {
                    foot,
                    t_ms: frames.iter().map(|f| f.t_ms).collect(),
                    pressure: (0..SENSOR_COUNT).map(|i| frames.iter().map(|f| f.pressure[i]).collect()).collect(),
                    gaps: segs.iter().flat_map(|s| s.gaps.iter().copied()).collect(),
                }
            })
            .collect();
        RawSensorPayload { schema_version: SCHEMA_VERSION, sample_rate_hz, feet }
    }

    /// The selected sensors of one foot, in the order requested.
    pub fn project(&self, foot: FootSide, sensors: &[usize]) -> Result<RawProjection, ProjectionError> {
        let f = self.feet.iter().find(|f| f.foot == foot).ok_or(ProjectionError::NoFoot(foot))?;
        let series = sensors
            .iter()
            .map(|&i| {
                let values = f.pressure.get(i).ok_or(ProjectionError::SensorOutOfRange(i))?;
                Ok(NamedSeries { name: format!("S{i}"), sensor: i, values: values.clone() })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(RawProjection { foot, t_ms: f.t_ms.clone(), series })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FootHeatmaps {
    pub left: Option<Heatmap>,
    pub right: Option<Heatmap>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WalkingPayload {
    pub schema_version: u32,
    pub session_type: SessionType,
    pub parameter_names: Vec<String>,
    pub summary: WalkingSummary,
    pub events_left: Vec<GaitEvent>,
    pub events_right: Vec<GaitEvent>,
    pub turns: Vec<Turn>,
    pub cycles: Vec<GaitCycle>,
    pub plantar_heatmaps: FootHeatmaps,
    pub cop_occupancy: Option<Heatmap>,
    pub butterfly: Option<ButterflyDiagram>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentOccupancy {
    pub eyes_open: Option<Heatmap>,
    pub eyes_closed: Option<Heatmap>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BalancePayload {
    pub schema_version: u32,
    pub sway: SwayAnalysis,
    pub plantar_heatmaps: FootHeatmaps,
    pub cop_occupancy: SegmentOccupancy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryOutput {
    pub probability: f64,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeverityOutput {
    pub distribution: Vec<f64>,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelIds {
    pub binary: String,
    pub severity: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AiPayload {
    pub schema_version: u32,
    pub notice: String,
    pub binary: BinaryOutput,
    pub severity: SeverityOutput,
    pub model_ids: ModelIds,
    pub model_versions: ModelIds,
    pub feature_vector_hash: String,
    pub features: FeatureVector,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error("no frames for the {0} foot")]
    EmptyFoot(FootSide),
    #[error(transparent)]
    Curation(#[from] CurationError),
    #[error("report serialization failed: {0}")]
    Serialization(String),
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub layout: SensorLayout,
    pub sample_rate_hz: f64,
    pub walk: WalkConfig,
    pub walking_stance_width_mm: f64,
    pub sway: SwayConfig,
    pub plantar_grid: PlantarGrid,
    pub occupancy_grid: OccupancyGrid,
    /// Boosted screen and severity forest; the assessment is skipped without them.
    pub models: Option<(TreeEnsembleModel, TreeEnsembleModel)>,
}

impl PipelineConfig {
    pub fn new(layout: SensorLayout, models: Option<(TreeEnsembleModel, TreeEnsembleModel)>) -> Self {
        PipelineConfig {
            layout,
            sample_rate_hz: crate::model::CANONICAL_RATE_HZ,
            walk: WalkConfig::default(),
            walking_stance_width_mm: WALKING_STANCE_WIDTH_MM,
            sway: SwayConfig::default(),
            plantar_grid: PlantarGrid::default(),
            occupancy_grid: OccupancyGrid::default(),
            models,
        }
    }
}

/// Serialized payloads by kind, plus the kinds that could not be produced and why.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PipelineOutput {
    pub reports: BTreeMap<ReportKind, String>,
    pub skipped: BTreeMap<ReportKind, String>,
}

/// Curation of one session's raw frames. Standing sessions keep the static load,
/// so no baseline is removed there.
pub fn curate_session(
    session_type: SessionType,
    frames: &[SensorFrame],
    sample_rate_hz: f64,
) -> Result<FootSegments, PipelineError> {
    let cfg = if session_type.is_walking() { CurationConfig::default() } else { CurationConfig::without_baseline() };
    let mut segments = FootSegments::default();
    for foot in FootSide::BOTH {
        let own: Vec<SensorFrame> = frames.iter().filter(|f| f.foot == foot).cloned().collect();
        if own.is_empty() {
            return Err(PipelineError::EmptyFoot(foot));
        }
        let curated: Vec<CuratedSegment> = curate_with(&own, sample_rate_hz, &cfg)?;
        *segments.get_mut(foot) = curated;
    }
    Ok(segments)
}

fn to_json<T: Serialize>(v: &T) -> Result<String, PipelineError> {
    serde_json::to_string(v).map_err(|e| PipelineError::Serialization(e.to_string()))
}

fn foot_heatmaps(segments: &FootSegments, cfg: &PipelineConfig) -> FootHeatmaps {
    let map = |foot: FootSide| {
        let frames: Vec<SensorFrame> = segments.frames(foot).cloned().collect();
        plantar_heatmap(&frames, &cfg.layout.for_foot(foot), &cfg.plantar_grid).ok()
    };
    FootHeatmaps { left: map(FootSide::Left), right: map(FootSide::Right) }
}

fn body_track(segments: &FootSegments, cfg: &PipelineConfig, stance_width_mm: f64) -> Vec<CopPoint> {
    let left: Vec<SensorFrame> = segments.frames(FootSide::Left).cloned().collect();
    let right: Vec<SensorFrame> = segments.frames(FootSide::Right).cloned().collect();
    global_track(&left, &right, &cfg.layout, cfg.sample_rate_hz, stance_width_mm)
}

fn walking_payload(
    session_type: SessionType,
    segments: &FootSegments,
    cfg: &PipelineConfig,
) -> Result<WalkingPayload, String> {
    let a = analyze_walk(segments, &cfg.layout, &cfg.walk).map_err(|e| e.to_string())?;
    let track = body_track(segments, cfg, cfg.walking_stance_width_mm);
    Ok(WalkingPayload {
        schema_version: SCHEMA_VERSION,
        session_type,
        parameter_names: CycleParameters::NAMES.iter().map(|s| s.to_string()).collect(),
        plantar_heatmaps: foot_heatmaps(segments, cfg),
        cop_occupancy: cop_occupancy_heatmap(&track, &cfg.occupancy_grid).ok(),
        butterfly: butterfly(&track, &a.cycles).ok(),
        summary: a.summary,
        events_left: a.events_left,
        events_right: a.events_right,
        turns: a.turns,
        cycles: a.cycles,
    })
}

fn balance_payload(segments: &FootSegments, cfg: &PipelineConfig) -> Result<BalancePayload, SwayError> {
    let sway = sway_analysis(SessionType::StandingBalance, segments, cfg.sample_rate_hz, &cfg.layout, &cfg.sway)?;
    let occupancy = |series: &crate::balance::SwaySeries| {
        let pts: Vec<CopPoint> = series
            .t_ms
            .iter()
            .zip(series.ml_mm.iter().zip(&series.ap_mm))
            .map(|(&t, (&x, &y))| CopPoint {
                t_ms: t,
                x_mm: x,
                y_mm: y,
                total_force: 1.0,
                frame: crate::balance::CopFrameKind::Global,
            })
            .collect();
        cop_occupancy_heatmap(&pts, &cfg.occupancy_grid).ok()
    };
    Ok(BalancePayload {
        schema_version: SCHEMA_VERSION,
        plantar_heatmaps: foot_heatmaps(segments, cfg),
        cop_occupancy: SegmentOccupancy {
            eyes_open: occupancy(&sway.eyes_open.combined),
            eyes_closed: occupancy(&sway.eyes_closed.combined),
        },
        sway,
    })
}

fn ai_payload(summary: &WalkingSummary, models: &(TreeEnsembleModel, TreeEnsembleModel)) -> Result<AiPayload, String> {
    let (screen, forest) = models;
    let fv = extract_features(summary, None).map_err(|e| e.to_string())?;
    let b = predict_binary(screen, &fv).map_err(|e| e.to_string())?;
    let s = predict_severity(forest, &fv).map_err(|e| e.to_string())?;
    Ok(AiPayload {
        schema_version: SCHEMA_VERSION,
        notice: PLACEHOLDER_NOTICE.into(),
        binary: BinaryOutput { probability: b.probability.unwrap_or(0.0), label: b.label },
        severity: SeverityOutput { distribution: s.class_distribution.unwrap_or_default(), label: s.label },
        model_ids: ModelIds { binary: screen.model_id.clone(), severity: forest.model_id.clone() },
        model_versions: ModelIds { binary: screen.version.clone(), severity: forest.version.clone() },
        feature_vector_hash: fv.hash(),
        features: fv,
    })
}

/// Stage one: the curated raw channels.
pub fn raw_report(segments: &FootSegments, cfg: &PipelineConfig) -> Result<String, PipelineError> {
    to_json(&RawSensorPayload::from_segments(segments, cfg.sample_rate_hz))
}

/// Stage two: the walking summary or the balance report, by session type. The error
/// string explains why the report cannot be produced.
pub fn analysis_report(
    session_type: SessionType,
    segments: &FootSegments,
    cfg: &PipelineConfig,
) -> Result<Result<(ReportKind, String), String>, PipelineError> {
    if session_type.is_walking() {
        match walking_payload(session_type, segments, cfg) {
            Ok(w) => Ok(Ok((ReportKind::WalkingSummary, to_json(&w)?))),
            Err(e) => Ok(Err(e)),
        }
    } else {
        match balance_payload(segments, cfg) {
            Ok(b) => Ok(Ok((ReportKind::Balance, to_json(&b)?))),
            Err(e) => Ok(Err(e.to_string())),
        }
    }
}

/// Whether the session type gets a model assessment.
pub fn wants_assessment(session_type: SessionType) -> bool {
    matches!(session_type, SessionType::Walk10m { .. })
}

/// Stage three: model outputs from a serialized walking payload.
pub fn assessment_report(walking_json: &str, cfg: &PipelineConfig) -> Result<Result<String, String>, PipelineError> {
    let walking: WalkingPayload =
        serde_json::from_str(walking_json).map_err(|e| PipelineError::Serialization(e.to_string()))?;
    let Some(models) = cfg.models.as_ref() else {
        return Ok(Err("no models loaded".into()));
    };
    match ai_payload(&walking.summary, models) {
        Ok(ai) => Ok(Ok(to_json(&ai)?)),
        Err(e) => Ok(Err(e)),
    }
}

/// Runs every stage that applies to the session type. Deterministic: the same frames
/// and configuration give byte-identical payloads.
pub fn run_pipeline(
    session_type: SessionType,
    frames: &[SensorFrame],
    cfg: &PipelineConfig,
) -> Result<PipelineOutput, PipelineError> {
    let segments = curate_session(session_type, frames, cfg.sample_rate_hz)?;
    let mut out = PipelineOutput::default();
    out.reports.insert(ReportKind::RawSensor, raw_report(&segments, cfg)?);
    let analysis_kind = if session_type.is_walking() { ReportKind::WalkingSummary } else { ReportKind::Balance };
    match analysis_report(session_type, &segments, cfg)? {
        Ok((kind, json)) => {
            out.reports.insert(kind, json);
        }
        Err(e) => {
            out.skipped.insert(analysis_kind, e);
        }
    }
    if wants_assessment(session_type) {
        match out.reports.get(&ReportKind::WalkingSummary) {
            Some(w) => match assessment_report(w, cfg)? {
                Ok(json) => {
                    out.reports.insert(ReportKind::AiAssessment, json);
                }
                Err(e) => {
                    out.skipped.insert(ReportKind::AiAssessment, e);
                }
            },
            None => {
                out.skipped.insert(ReportKind::AiAssessment, "no walking summary".into());
            }
        }
    }
    Ok(out)
}
