//! Quiet-standing generator: eyes open, then eyes closed.
//!
//! A unit-variance Ornstein-Uhlenbeck process (clipped at ±3) scaled by the phase
//! amplitude moves both feet's centre of pressure together. Each frame's pressures are
//! the least-norm perturbation of a uniform load that realizes the target COP exactly.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::model::{default_layout, FootSide, SensorFrame, SensorLayout, SENSOR_COUNT};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BalanceGenParams {
    /// Sway amplitude (standard deviation of the COP offset per axis) with eyes open.
    pub amplitude_eo_mm: f64,
    pub amplitude_ec_mm: f64,
    pub duration_s: f64,
    /// Time at which the eyes close.
    pub eyes_closed_at_s: f64,
    pub rate_hz: f64,
    /// Mean-reversion time constant.
    pub tau_s: f64,
    /// Mean pressure per sensor.
    pub load_kpa: f64,
    pub rng_seed: u64,
    pub start_ms: u64,
}

impl Default for BalanceGenParams {
    fn default() -> Self {
        BalanceGenParams {
            amplitude_eo_mm: 1.5,
            amplitude_ec_mm: 3.0,
            duration_s: 20.0,
            eyes_closed_at_s: 10.0,
            rate_hz: 100.0,
            tau_s: 0.5,
            load_kpa: 300.0,
            rng_seed: 0,
            start_ms: 0,
        }
    }
}

impl BalanceGenParams {
    pub fn validate(&self) -> Result<(), SimError> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        let amplitudes = [self.amplitude_eo_mm, self.amplitude_ec_mm];
        if amplitudes.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            return Err(SimError::InvalidParams("amplitudes must be non-negative".into()));
        }
        if !(ok(self.duration_s) && ok(self.rate_hz) && ok(self.tau_s) && ok(self.load_kpa)) {
            return Err(SimError::InvalidParams("duration, rate, tau and load must be positive".into()));
        }
        // worst-case offset must leave every sensor loaded
        let layout = default_layout();
        let a = 3.0 * amplitudes.iter().fold(0.0f64, |m, &v| m.max(v));
        for foot in FootSide::BOTH {
            let l = layout.for_foot(foot);
            let [cx, cy] = l.centroid();
            for [dx, dy] in [[a, a], [a, -a], [-a, a], [-a, -a]] {
                if least_norm_pressures(&l, self.load_kpa, [cx + dx, cy + dy]).iter().any(|&p| p < 0.0) {
                    return Err(SimError::InvalidParams("amplitude too large for the sensor layout".into()));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BalanceTruth {
    pub t_ms: Vec<u64>,
    /// Exact per-foot COP in each insole's own frame.
    pub left_cop: Vec<[f64; 2]>,
    pub right_cop: Vec<[f64; 2]>,
    /// Offset from the resting position, shared by both feet.
    pub offset: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedBalance {
    pub left: Vec<SensorFrame>,
    pub right: Vec<SensorFrame>,
    pub truth: BalanceTruth,
}

fn solve3(m: [[f64; 3]; 3], b: [f64; 3]) -> [f64; 3] {
    let det = |m: [[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(m);
    let mut out = [0.0; 3];
    for (col, o) in out.iter_mut().enumerate() {
        let mut mc = m;
        for row in 0..3 {
            mc[row][col] = b[row];
        }
        *o = det(mc) / d;
    }
    out
}

/// Pressures closest (in the L2 sense) to a uniform `load` per sensor whose total stays
/// `16·load` and whose COP is `target`.
pub fn least_norm_pressures(layout: &SensorLayout, load: f64, target: [f64; 2]) -> [f64; SENSOR_COUNT] {
    let rows: Vec<[f64; 3]> = layout.positions.iter().map(|&[x, y]| [1.0, x, y]).collect();
    let total = load * SENSOR_COUNT as f64;
    // constraints A p = b with rows (1, x, y)
    let b = [total, total * target[0], total * target[1]];
    let mut ap0 = [0.0; 3];
    let mut aat = [[0.0; 3]; 3];
    for r in &rows {
        for i in 0..3 {
            ap0[i] += r[i] * load;
            for j in 0..3 {
                aat[i][j] += r[i] * r[j];
            }
        }
    }
    let lambda = solve3(aat, [b[0] - ap0[0], b[1] - ap0[1], b[2] - ap0[2]]);
    let mut p = [0.0; SENSOR_COUNT];
    for (pi, r) in p.iter_mut().zip(&rows) {
        *pi = load + r[0] * lambda[0] + r[1] * lambda[1] + r[2] * lambda[2];
    }
    p
}

pub fn generate_balance(params: &BalanceGenParams) -> Result<GeneratedBalance, SimError> {
    params.validate()?;
    let layout = default_layout();
    let feet = [layout.for_foot(FootSide::Left), layout.for_foot(FootSide::Right)];
    let mut rng = ChaCha8Rng::seed_from_u64(params.rng_seed);
    let n = (params.duration_s * params.rate_hz).round() as usize;
    let dt = 1.0 / params.rate_hz;
    let rho = (-dt / params.tau_s).exp();
    let kick = (1.0 - rho * rho).sqrt();

    let mut state = [0.0f64; 2];
    for s in &mut state {
        *s = StandardNormal.sample(&mut rng);
    }
    let mut out =
        GeneratedBalance { left: Vec::with_capacity(n), right: Vec::with_capacity(n), truth: BalanceTruth::default() };
    for k in 0..n {
        let offset_ms = (k as f64 * 1000.0 * dt).round() as u64;
        let t = offset_ms as f64 / 1000.0;
        if k > 0 {
            for s in &mut state {
                let z: f64 = StandardNormal.sample(&mut rng);
                *s = rho * *s + kick * z;
            }
        }
        let amp = if t < params.eyes_closed_at_s { params.amplitude_eo_mm } else { params.amplitude_ec_mm };
        let offset = [amp * state[0].clamp(-3.0, 3.0), amp * state[1].clamp(-3.0, 3.0)];
        let t_ms = params.start_ms + offset_ms;
        for (foot, l) in FootSide::BOTH.into_iter().zip(&feet) {
            let [cx, cy] = l.centroid();
            let cop = [cx + offset[0], cy + offset[1]];
            let mut f = SensorFrame::zeroed(foot, k as u32, t_ms);
            f.pressure = least_norm_pressures(l, params.load_kpa, cop);
            f.accel = [0.0, 0.0, 9.80665];
            f.mag = [20.0, 0.0, -40.0];
            match foot {
                FootSide::Left => {
                    out.left.push(f);
                    out.truth.left_cop.push(cop);
                }
                FootSide::Right => {
                    out.right.push(f);
                    out.truth.right_cop.push(cop);
                }
            }
        }
        out.truth.t_ms.push(t_ms);
        out.truth.offset.push(offset);
    }
    Ok(out)
}
