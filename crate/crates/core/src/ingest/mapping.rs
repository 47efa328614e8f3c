//! Mapping of third-party insole records onto the canonical frame.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::model::{default_layout, FootSide, SensorFrame, SensorLayout, SENSOR_COUNT};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MappingError {
    #[error("record is missing field {0:?}")]
    MissingField(String),
    #[error("canonical pressure channel {0} has no source")]
    UnmappedChannel(usize),
    #[error("canonical channel {0} is mapped more than once")]
    DuplicateChannel(Channel),
    #[error("scale for {0} must be finite and non-zero")]
    BadScale(Channel),
    #[error("field {field:?} holds {value}, expected {expected}")]
    BadValue { field: String, value: String, expected: &'static str },
    #[error("malformed mapping document: {0}")]
    Parse(String),
}

/// A canonical frame channel, written `pressure.N`, `accel.N`, `gyro.N` or `mag.N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Channel {
    Pressure(usize),
    Accel(usize),
    Gyro(usize),
    Mag(usize),
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Channel::Pressure(i) => write!(f, "pressure.{i}"),
            Channel::Accel(i) => write!(f, "accel.{i}"),
            Channel::Gyro(i) => write!(f, "gyro.{i}"),
            Channel::Mag(i) => write!(f, "mag.{i}"),
        }
    }
}

impl FromStr for Channel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, idx) = s.split_once('.').ok_or_else(|| format!("bad channel {s:?}"))?;
        let idx: usize = idx.parse().map_err(|_| format!("bad channel index in {s:?}"))?;
        let (ch, limit) = match kind {
            "pressure" => (Channel::Pressure(idx), SENSOR_COUNT),
            "accel" => (Channel::Accel(idx), 3),
            "gyro" => (Channel::Gyro(idx), 3),
            "mag" => (Channel::Mag(idx), 3),
            _ => return Err(format!("unknown channel kind in {s:?}")),
        };
        if idx >= limit {
            return Err(format!("channel index out of range in {s:?}"));
        }
        Ok(ch)
    }
}

impl Serialize for Channel {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Channel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelMap {
    pub source: String,
    pub target: Channel,
    #[serde(default = "one")]
    pub scale: f64,
    #[serde(default)]
    pub offset: f64,
}

fn one() -> f64 {
    1.0
}

/// How one vendor's records translate to [`SensorFrame`]: `value = raw · scale + offset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MappingSpec {
    pub source_model_id: String,
    pub foot_field: String,
    pub seq_field: String,
    pub time_field: String,
    /// Multiplier turning the source time unit into milliseconds.
    #[serde(default = "one")]
    pub time_scale_ms: f64,
    pub channels: Vec<ChannelMap>,
    pub layout: SensorLayout,
}

impl MappingSpec {
    pub fn from_json(s: &str) -> Result<Self, MappingError> {
        let spec: MappingSpec = serde_json::from_str(s).map_err(|e| MappingError::Parse(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    /// One-to-one mapping with fields `p0..p15`, `ax..az`, `gx..gz`, `mx..mz`.
    pub fn identity(source_model_id: &str) -> Self {
        let mut channels: Vec<ChannelMap> = (0..SENSOR_COUNT)
            .map(|i| ChannelMap { source: format!("p{i}"), target: Channel::Pressure(i), scale: 1.0, offset: 0.0 })
            .collect();
        for (prefix, make) in [('a', Channel::Accel as fn(usize) -> Channel), ('g', Channel::Gyro), ('m', Channel::Mag)]
        {
            for (i, axis) in ['x', 'y', 'z'].into_iter().enumerate() {
                channels.push(ChannelMap {
                    source: format!("{prefix}{axis}"),
                    target: make(i),
                    scale: 1.0,
                    offset: 0.0,
                });
            }
        }
        MappingSpec {
            source_model_id: source_model_id.to_string(),
            foot_field: "foot".into(),
            seq_field: "seq".into(),
            time_field: "t_ms".into(),
            time_scale_ms: 1.0,
            channels,
            layout: default_layout(),
        }
    }

    pub fn validate(&self) -> Result<(), MappingError> {
        let mut seen = std::collections::HashSet::new();
        for c in &self.channels {
            if !seen.insert(c.target) {
                return Err(MappingError::DuplicateChannel(c.target));
            }
            if !(c.scale.is_finite() && c.scale != 0.0 && c.offset.is_finite()) {
                return Err(MappingError::BadScale(c.target));
            }
        }
        if let Some(i) = (0..SENSOR_COUNT).find(|&i| !seen.contains(&Channel::Pressure(i))) {
            return Err(MappingError::UnmappedChannel(i));
        }
        self.layout.validate().map_err(|e| MappingError::Parse(e.to_string()))
    }
}

fn field<'a>(record: &'a Map<String, Value>, name: &str) -> Result<&'a Value, MappingError> {
    record.get(name).ok_or_else(|| MappingError::MissingField(name.to_string()))
}

fn number(record: &Map<String, Value>, name: &str) -> Result<f64, MappingError> {
    let v = field(record, name)?;
    let parsed = match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    };
    parsed.ok_or_else(|| MappingError::BadValue { field: name.into(), value: v.to_string(), expected: "a number" })
}

/// Translates one key-value record into a canonical frame.
pub fn map_external(record: &Map<String, Value>, spec: &MappingSpec) -> Result<SensorFrame, MappingError> {
    spec.validate()?;
    let foot_value = field(record, &spec.foot_field)?;
    let foot = match foot_value {
        Value::String(s) => FootSide::parse(s),
        Value::Number(n) => FootSide::parse(&n.to_string()),
        _ => None,
    }
    .ok_or_else(|| MappingError::BadValue {
        field: spec.foot_field.clone(),
        value: foot_value.to_string(),
        expected: "left/right",
    })?;
    let seq = number(record, &spec.seq_field)?;
    let t = number(record, &spec.time_field)? * spec.time_scale_ms;
    if !(seq >= 0.0 && seq <= f64::from(u32::MAX)) || !(t >= 0.0 && t.is_finite()) {
        return Err(MappingError::BadValue {
            field: spec.time_field.clone(),
            value: format!("seq={seq} t={t}"),
            expected: "non-negative seq and time",
        });
    }

    let mut frame = SensorFrame::zeroed(foot, seq as u32, t.round() as u64);
    for c in &spec.channels {
        let v = number(record, &c.source)? * c.scale + c.offset;
        match c.target {
            Channel::Pressure(i) => frame.pressure[i] = v,
            Channel::Accel(i) => frame.accel[i] = v,
            Channel::Gyro(i) => frame.gyro[i] = v,
            Channel::Mag(i) => frame.mag[i] = v,
        }
    }
    Ok(frame)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn record() -> Map<String, Value> {
        let mut m = Map::new();
        m.insert("foot".into(), json!("L"));
        m.insert("seq".into(), json!(7));
        m.insert("t_ms".into(), json!(1234));
        for i in 0..16 {
            m.insert(format!("p{i}"), json!(i as f64 + 0.5));
        }
        for (k, v) in [
            ("ax", 1.0),
            ("ay", 2.0),
            ("az", 3.0),
            ("gx", 4.0),
            ("gy", 5.0),
            ("gz", 6.0),
            ("mx", 7.0),
            ("my", 8.0),
            ("mz", 9.0),
        ] {
            m.insert(k.into(), json!(v));
        }
        m
    }

    #[test]
    fn identity_mapping_copies_values() {
        let f = map_external(&record(), &MappingSpec::identity("x")).unwrap();
        assert_eq!(f.foot, FootSide::Left);
        assert_eq!((f.seq, f.t_ms), (7, 1234));
        for i in 0..16 {
            assert_eq!(f.pressure[i], i as f64 + 0.5);
        }
        assert_eq!(f.accel, [1.0, 2.0, 3.0]);
        assert_eq!(f.gyro, [4.0, 5.0, 6.0]);
        assert_eq!(f.mag, [7.0, 8.0, 9.0]);
    }

    #[test]
    fn scale_is_applied() {
        let mut spec = MappingSpec::identity("x");
        spec.channels[0].scale = 2.0;
        let mut r = record();
        r.insert("p0".into(), json!(5));
        assert_eq!(map_external(&r, &spec).unwrap().pressure[0], 10.0);
    }

    #[test]
    fn missing_source_field() {
        let mut r = record();
        r.remove("p7");
        assert_eq!(map_external(&r, &MappingSpec::identity("x")), Err(MappingError::MissingField("p7".into())));
    }

    #[test]
    fn spec_must_cover_every_pressure_channel() {
        let mut spec = MappingSpec::identity("x");
        spec.channels.retain(|c| c.target != Channel::Pressure(11));
        assert_eq!(spec.validate(), Err(MappingError::UnmappedChannel(11)));

        let mut spec = MappingSpec::identity("x");
        spec.channels[3].scale = 0.0;
        assert_eq!(spec.validate(), Err(MappingError::BadScale(Channel::Pressure(3))));
    }

    #[test]
    fn spec_document_round_trips_and_rejects_unknown_fields() {
        let spec = MappingSpec::identity("vendor-x");
        let json = serde_json::to_string(&spec).unwrap();
        assert!(json.contains("\"pressure.15\""));
        assert_eq!(MappingSpec::from_json(&json).unwrap(), spec);

        let mut v: Value = serde_json::from_str(&json).unwrap();
        v["surprise"] = json!(1);
        assert!(matches!(MappingSpec::from_json(&v.to_string()), Err(MappingError::Parse(_))));
    }

    #[test]
    fn time_scale_converts_seconds() {
        let mut spec = MappingSpec::identity("x");
        spec.time_scale_ms = 1000.0;
        let mut r = record();
        r.insert("t_ms".into(), json!(1.5));
        assert_eq!(map_external(&r, &spec).unwrap().t_ms, 1500);
    }
}
