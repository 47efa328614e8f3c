//! Canonical insole telemetry model: sensor geometry, frames, sessions and pairings.
//!
//! Every other module normalizes into these types. Pressures are kPa, accelerations
//! m/s², angular rates deg/s and magnetic field µT.

use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use uuid::Uuid;

use crate::ingest::CuratedSegment;

/// Number of plantar pressure sensors per insole.
pub const SENSOR_COUNT: usize = 16;

/// Full-scale pressure reading of one sensor.
pub const FULL_SCALE_KPA: f64 = 1200.0;

/// Sampling rate every segment is resampled onto unless configured otherwise.
pub const CANONICAL_RATE_HZ: f64 = 100.0;

const DEFAULT_LAYOUT_JSON: &str = include_str!("../../../config/layouts/default.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FootSide {
    Left,
    Right,
}

impl FootSide {
    pub const BOTH: [FootSide; 2] = [FootSide::Left, FootSide::Right];

    pub fn opposite(self) -> FootSide {
        match self {
            FootSide::Left => FootSide::Right,
            FootSide::Right => FootSide::Left,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FootSide::Left => "left",
            FootSide::Right => "right",
        }
    }

    /// Parses the spellings seen on the wire and in third-party exports.
    pub fn parse(s: &str) -> Option<FootSide> {
        match s.trim().to_ascii_lowercase().as_str() {
            "left" | "l" | "0" => Some(FootSide::Left),
            "right" | "r" | "1" => Some(FootSide::Right),
            _ => None,
        }
    }
}

impl fmt::Display for FootSide {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum LayoutError {
    #[error("layout must have exactly {SENSOR_COUNT} positions, found {0}")]
    PositionCount(usize),
    #[error("length_mm must be positive and finite")]
    BadLength,
    #[error("sensor {index} at ({x}, {y}) lies outside the insole outline")]
    OutOfBounds { index: usize, x: f64, y: f64 },
    #[error("{0} group is empty")]
    EmptyGroup(&'static str),
    #[error("sensor index {0} in a group is out of range")]
    GroupIndex(usize),
    #[error("sensor {0} belongs to both heel and forefoot groups")]
    OverlappingGroups(usize),
    #[error("malformed layout document: {0}")]
    Parse(String),
}

/// Sensor geometry in the insole-local frame.
///
/// The committed table describes a right insole: +x points lateral, +y toward the
/// toes, origin at the heel center. The left insole is the same table with x negated,
/// so in both feet +x points toward the body's right side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorLayout {
    pub insole_model_id: String,
    pub length_mm: f64,
    pub positions: Vec<[f64; 2]>,
    pub heel_group: Vec<usize>,
    pub forefoot_group: Vec<usize>,
}

impl SensorLayout {
    pub fn from_json(s: &str) -> Result<Self, LayoutError> {
        let layout: SensorLayout = serde_json::from_str(s).map_err(|e| LayoutError::Parse(e.to_string()))?;
        layout.validate()?;
        Ok(layout)
    }

    pub fn validate(&self) -> Result<(), LayoutError> {
        if self.positions.len() != SENSOR_COUNT {
            return Err(LayoutError::PositionCount(self.positions.len()));
        }
        if !(self.length_mm.is_finite() && self.length_mm > 0.0) {
            return Err(LayoutError::BadLength);
        }
        for (index, &[x, y]) in self.positions.iter().enumerate() {
            let inside = (-60.0..=60.0).contains(&x) && (0.0..=self.length_mm).contains(&y);
            if !inside {
                return Err(LayoutError::OutOfBounds { index, x, y });
            }
        }
        for (name, group) in [("heel", &self.heel_group), ("forefoot", &self.forefoot_group)] {
            if group.is_empty() {
                return Err(LayoutError::EmptyGroup(name));
            }
            if let Some(&bad) = group.iter().find(|&&i| i >= SENSOR_COUNT) {
                return Err(LayoutError::GroupIndex(bad));
            }
        }
        if let Some(&shared) = self.heel_group.iter().find(|i| self.forefoot_group.contains(i)) {
            return Err(LayoutError::OverlappingGroups(shared));
        }
        Ok(())
    }

    /// The same layout with x negated (right ↔ left insole).
    pub fn mirrored(&self) -> SensorLayout {
        SensorLayout { positions: self.positions.iter().map(|&[x, y]| [-x, y]).collect(), ..self.clone() }
    }

    /// Geometry for one foot; the stored table is the right insole.
    pub fn for_foot(&self, foot: FootSide) -> SensorLayout {
        match foot {
            FootSide::Right => self.clone(),
            FootSide::Left => self.mirrored(),
        }
    }

    /// Shifts every position; used by geometry property checks.
    pub fn translated(&self, dx: f64, dy: f64) -> SensorLayout {
        SensorLayout { positions: self.positions.iter().map(|&[x, y]| [x + dx, y + dy]).collect(), ..self.clone() }
    }

    pub fn centroid(&self) -> [f64; 2] {
        let n = self.positions.len() as f64;
        let (sx, sy) = self.positions.iter().fold((0.0, 0.0), |(sx, sy), &[x, y]| (sx + x, sy + y));
        [sx / n, sy / n]
    }
}

/// The committed 16-sensor layout for a 260 mm insole.
pub fn default_layout() -> SensorLayout {
    SensorLayout::from_json(DEFAULT_LAYOUT_JSON).expect("committed default layout is valid")
}

/// One timestamped sample from one insole.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorFrame {
    pub foot: FootSide,
    pub seq: u32,
    pub t_ms: u64,
    pub pressure: [f64; SENSOR_COUNT],
    pub accel: [f64; 3],
    pub gyro: [f64; 3],
    pub mag: [f64; 3],
}

impl SensorFrame {
    pub fn zeroed(foot: FootSide, seq: u32, t_ms: u64) -> Self {
        SensorFrame { foot, seq, t_ms, pressure: [0.0; SENSOR_COUNT], accel: [0.0; 3], gyro: [0.0; 3], mag: [0.0; 3] }
    }

    pub fn total_pressure(&self) -> f64 {
        self.pressure.iter().sum()
    }

    pub fn is_finite(&self) -> bool {
        self.pressure.iter().chain(&self.accel).chain(&self.gyro).chain(&self.mag).all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NonFinite { channel: &'static str, index: usize },
    NegativePressure { index: usize },
    AboveFullScale { index: usize, value: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonFinite { channel, index } => {
                write!(f, "non-finite value in {channel}[{index}]")
            }
            Violation::NegativePressure { index } => write!(f, "negative pressure at index {index}"),
            Violation::AboveFullScale { index, value } => {
                write!(f, "pressure {value} kPa at index {index} exceeds full scale {FULL_SCALE_KPA} kPa")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationResult {
    pub violations: Vec<Violation>,
}

impl ValidationResult {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks sign, finiteness and full-scale rules. Violations are reported, not raised.
pub fn validate_frame(frame: &SensorFrame) -> ValidationResult {
    let mut violations = Vec::new();
    for (index, &p) in frame.pressure.iter().enumerate() {
        if !p.is_finite() {
            violations.push(Violation::NonFinite { channel: "pressure", index });
        } else if p < 0.0 {
            violations.push(Violation::NegativePressure { index });
        } else if p > FULL_SCALE_KPA {
            violations.push(Violation::AboveFullScale { index, value: p });
        }
    }
    for (channel, values) in [("accel", &frame.accel), ("gyro", &frame.gyro), ("mag", &frame.mag)] {
        for (index, v) in values.iter().enumerate() {
            if !v.is_finite() {
                violations.push(Violation::NonFinite { channel, index });
            }
        }
    }
    ValidationResult { violations }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WalkSpeed {
    Slow,
    Normal,
    High,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SessionType {
    FreeWalk,
    #[serde(rename = "walk10m")]
    Walk10m {
        speed: WalkSpeed,
    },
    Tug,
    StandingBalance,
}

impl SessionType {
    /// Session types whose reports are gait-cycle based.
    pub fn is_walking(self) -> bool {
        !matches!(self, SessionType::StandingBalance)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionStatus {
    Open,
    Finalized,
    Analyzed,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("session status cannot move from {from:?} to {to:?}")]
pub struct StatusTransitionError {
    pub from: SessionStatus,
    pub to: SessionStatus,
}

impl SessionStatus {
    /// Only the forward steps Open → Finalized → Analyzed are allowed.
    pub fn advance(self, to: SessionStatus) -> Result<SessionStatus, StatusTransitionError> {
        match (self, to) {
            (SessionStatus::Open, SessionStatus::Finalized) | (SessionStatus::Finalized, SessionStatus::Analyzed) => {
                Ok(to)
            }
            (from, to) => Err(StatusTransitionError { from, to }),
        }
    }
}

/// Curated per-foot data, ordered by time.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FootSegments {
    pub left: Vec<CuratedSegment>,
    pub right: Vec<CuratedSegment>,
}

impl FootSegments {
    pub fn get(&self, foot: FootSide) -> &[CuratedSegment] {
        match foot {
            FootSide::Left => &self.left,
            FootSide::Right => &self.right,
        }
    }

    pub fn get_mut(&mut self, foot: FootSide) -> &mut Vec<CuratedSegment> {
        match foot {
            FootSide::Left => &mut self.left,
            FootSide::Right => &mut self.right,
        }
    }

    pub fn frames(&self, foot: FootSide) -> impl Iterator<Item = &SensorFrame> {
        self.get(foot).iter().flat_map(|s| s.frames.iter())
    }

    pub fn frame_count(&self, foot: FootSide) -> usize {
        self.get(foot).iter().map(|s| s.frames.len()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: Uuid,
    pub patient_id: Uuid,
    pub pairing_id: Uuid,
    pub session_type: SessionType,
    pub started_at: DateTime<Utc>,
    pub sample_rate_hz: f64,
    pub segments: FootSegments,
    pub status: SessionStatus,
}

impl Session {
    pub fn new(patient_id: Uuid, pairing_id: Uuid, session_type: SessionType, started_at: DateTime<Utc>) -> Self {
        Session {
            session_id: Uuid::new_v4(),
            patient_id,
            pairing_id,
            session_type,
            started_at,
            sample_rate_hz: CANONICAL_RATE_HZ,
            segments: FootSegments::default(),
            status: SessionStatus::Open,
        }
    }

    pub fn advance(&mut self, to: SessionStatus) -> Result<(), StatusTransitionError> {
        self.status = self.status.advance(to)?;
        Ok(())
    }

    /// Earliest frame timestamp across both feet.
    pub fn first_t_ms(&self) -> Option<u64> {
        FootSide::BOTH.iter().filter_map(|&f| self.segments.frames(f).next().map(|fr| fr.t_ms)).min()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pairing {
    pub pairing_id: Uuid,
    pub patient_id: Uuid,
    pub insole_model_id: String,
    pub active: bool,
}
