use insole_core::model::{FootSide, SensorFrame};
use insole_core::sim::{generate_balance, generate_tug, generate_walk, BalanceGenParams, GaitGenParams, SimError};
use serde_json::json;

#[derive(Debug, Clone)]
pub enum Scenario {
    Walk(GaitGenParams),
    Tug(GaitGenParams),
    Balance(BalanceGenParams),
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::Walk(_) => "walk",
            Scenario::Tug(_) => "tug",
            Scenario::Balance(_) => "balance",
        }
    }

    /// Session type as the platform names it.
    pub fn session_type(&self) -> &'static str {
        match self {
            Scenario::Walk(_) => "walk10m",
            Scenario::Tug(_) => "tug",
            Scenario::Balance(_) => "standing_balance",
        }
    }
}

pub struct Generated {
    /// Both feet, ordered by timestamp with left first on ties.
    pub frames: Vec<SensorFrame>,
    /// Parameters and ground truth.
    pub truth: serde_json::Value,
}

fn to_value<T: serde::Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("generator types serialize")
}

fn interleave(left: &[SensorFrame], right: &[SensorFrame]) -> Vec<SensorFrame> {
    let mut all: Vec<SensorFrame> = left.iter().chain(right).cloned().collect();
    all.sort_by_key(|f| (f.t_ms, f.foot == FootSide::Right, f.seq));
    all
}

pub fn generate(s: &Scenario) -> Result<Generated, SimError> {
    Ok(match s {
        Scenario::Walk(p) | Scenario::Tug(p) => {
            let g = if matches!(s, Scenario::Walk(_)) { generate_walk(p)? } else { generate_tug(p)? };
            Generated {
                frames: g.interleaved(),
                truth: json!({ "scenario": s.name(), "params": to_value(p), "truth": to_value(&g.truth) }),
            }
        }
        Scenario::Balance(p) => {
            let g = generate_balance(p)?;
            Generated {
                frames: interleave(&g.left, &g.right),
                truth: json!({ "scenario": s.name(), "params": to_value(p), "truth": to_value(&g.truth) }),
            }
        }
    })
}
