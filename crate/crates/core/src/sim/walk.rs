//! Parametric walking generator with ground-truth events.
//!
//! Each stride lays two plateau pulses with raised-cosine ramps on the pressure
//! channels: the heel group carries one over [HS, HR] and the forefoot group one over
//! [FF, TO]. Ramps are placed so the group force crosses `theta_on` exactly at the
//! rising event and `theta_off` exactly at the falling one, which makes the event
//! times closed-form.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::gait::{parameters_from_times, CycleParameters, EventKind};
use crate::model::{default_layout, FootSide, SensorFrame, SensorLayout, FULL_SCALE_KPA, SENSOR_COUNT};

const GRAVITY: f64 = 9.80665;
const MIDFOOT_PEAK_KPA: f64 = 60.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnSpec {
    pub start_s: f64,
    pub duration_s: f64,
    /// Yaw rate in deg/s, signed.
    pub rate_dps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaitGenParams {
    pub cadence_steps_per_min: f64,
    /// Mean stance fraction of both feet.
    pub stance_fraction: f64,
    /// Right minus left stance fraction.
    pub stance_asymmetry: f64,
    /// Implied by the stances (left + right − 1); when given it must agree.
    pub double_support_fraction: Option<f64>,
    /// Left→right step lasts (1 + a)·T/2, right→left (1 − a)·T/2.
    pub step_time_asymmetry: f64,
    /// Shift of each group's pressure centre along the insole's lateral axis, [left, right].
    pub lateral_bias_mm: [f64; 2],
    pub duration_s: f64,
    pub rate_hz: f64,
    pub noise_sigma_kpa: f64,
    pub heel_peak_kpa: f64,
    pub forefoot_peak_kpa: f64,
    pub rng_seed: u64,
    pub start_ms: u64,
    /// Time of the first left heel strike after the start.
    pub first_strike_s: f64,
    pub turns: Vec<TurnSpec>,
    /// Thresholds whose crossings define the events.
    pub theta_on: f64,
    pub theta_off: f64,
    /// Length of each pulse ramp.
    pub ramp_s: f64,
}

impl Default for GaitGenParams {
    fn default() -> Self {
        GaitGenParams {
            cadence_steps_per_min: 110.0,
            stance_fraction: 0.62,
            stance_asymmetry: 0.0,
            double_support_fraction: None,
            step_time_asymmetry: 0.0,
            lateral_bias_mm: [0.0, 0.0],
            duration_s: 30.0,
            rate_hz: 100.0,
            noise_sigma_kpa: 0.0,
            heel_peak_kpa: 400.0,
            forefoot_peak_kpa: 350.0,
            rng_seed: 0,
            start_ms: 0,
            first_strike_s: 0.3,
            turns: Vec::new(),
            theta_on: 30.0,
            theta_off: 15.0,
            ramp_s: 0.06,
        }
    }
}

impl GaitGenParams {
    pub fn stride_s(&self) -> f64 {
        120.0 / self.cadence_steps_per_min
    }

    pub fn stance_of(&self, foot: FootSide) -> f64 {
        match foot {
            FootSide::Left => self.stance_fraction - self.stance_asymmetry / 2.0,
            FootSide::Right => self.stance_fraction + self.stance_asymmetry / 2.0,
        }
    }

    /// Fraction of the stride between a left heel strike and the following right one.
    fn right_phase(&self) -> f64 {
        0.5 * (1.0 + self.step_time_asymmetry)
    }

    pub fn derived_double_support(&self) -> f64 {
        self.stance_of(FootSide::Left) + self.stance_of(FootSide::Right) - 1.0
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidParams(m.to_string()));
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !(positive(self.cadence_steps_per_min) && self.cadence_steps_per_min <= 300.0) {
            return bad("cadence must lie in (0, 300] steps/min");
        }
        if !positive(self.rate_hz) || !positive(self.duration_s) {
            return bad("rate and duration must be positive");
        }
        if !(self.noise_sigma_kpa.is_finite() && self.noise_sigma_kpa >= 0.0) {
            return bad("noise sigma must be non-negative");
        }
        if !(self.theta_off > 0.0 && self.theta_off < self.theta_on) {
            return bad("need 0 < theta_off < theta_on");
        }
        let heel_group_peak = self.heel_peak_kpa * default_layout().heel_group.len() as f64;
        let fore_group_peak = self.forefoot_peak_kpa * default_layout().forefoot_group.len() as f64;
        if !(heel_group_peak > self.theta_on && fore_group_peak > self.theta_on)
            || self.heel_peak_kpa > FULL_SCALE_KPA
            || self.forefoot_peak_kpa > FULL_SCALE_KPA
        {
            return bad("peak pressures must exceed the contact threshold and stay within full scale");
        }
        let (sl, sr) = (self.stance_of(FootSide::Left), self.stance_of(FootSide::Right));
        if !(sl > 0.0 && sl < 1.0 && sr > 0.0 && sr < 1.0) {
            return bad("stance fractions must lie in (0, 1)");
        }
        if !(self.step_time_asymmetry.abs() < 1.0) {
            return bad("step time asymmetry must lie in (-1, 1)");
        }
        let phi = self.right_phase();
        if sl < phi || sr < 1.0 - phi {
            return bad("stances too short for the step timing: the gait would have a flight phase");
        }
        if let Some(ds) = self.double_support_fraction {
            if (ds - self.derived_double_support()).abs() > 1e-9 {
                return bad("double support fraction must equal left stance + right stance - 1");
            }
        }
        if !positive(self.ramp_s) || !positive(self.first_strike_s) {
            return bad("ramp and first strike time must be positive");
        }
        let t = self.stride_s();
        for foot in FootSide::BOTH {
            let s = self.stance_of(foot);
            // each pulse needs room for both ramps
            if 0.65 * s * t < 2.0 * self.ramp_s || 0.8 * s * t < 2.0 * self.ramp_s {
                return bad("stance too short for the pulse ramps");
            }
            if (1.0 - s) * t < 2.0 * self.ramp_s + 0.06 {
                return bad("swing too short for the pulse ramps");
            }
        }
        let layout = default_layout();
        for bias in self.lateral_bias_mm {
            for group in group_lists(&layout) {
                if lateral_weights(&layout, &group, bias).iter().any(|&w| !(w >= 0.0)) {
                    return bad("lateral bias too large for the sensor spread");
                }
            }
        }
        for turn in &self.turns {
            if !(turn.start_s >= 0.0 && positive(turn.duration_s) && turn.rate_dps.is_finite()) {
                return bad("turns need a non-negative start, positive duration and finite rate");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthEvent {
    pub kind: EventKind,
    /// Exact threshold-crossing time.
    pub t_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthCycle {
    pub foot: FootSide,
    pub hs_ms: f64,
    pub next_hs_ms: f64,
    pub parameters: CycleParameters,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub left: Vec<TruthEvent>,
    pub right: Vec<TruthEvent>,
    pub cycles: Vec<TruthCycle>,
}

impl GroundTruth {
    pub fn events(&self, foot: FootSide) -> &[TruthEvent] {
        match foot {
            FootSide::Left => &self.left,
            FootSide::Right => &self.right,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedWalk {
    pub left: Vec<SensorFrame>,
    pub right: Vec<SensorFrame>,
    pub truth: GroundTruth,
}

impl GeneratedWalk {
    pub fn frames(&self, foot: FootSide) -> &[SensorFrame] {
        match foot {
            FootSide::Left => &self.left,
            FootSide::Right => &self.right,
        }
    }

    /// Both feet interleaved by timestamp, left first on ties.
    pub fn interleaved(&self) -> Vec<SensorFrame> {
        let mut all: Vec<SensorFrame> = self.left.iter().chain(&self.right).cloned().collect();
        all.sort_by_key(|f| (f.t_ms, f.foot == FootSide::Right, f.seq));
        all
    }
}

/// Event times in seconds of one stride.
#[derive(Debug, Clone, Copy)]
struct Stride {
    hs: f64,
    ff: f64,
    hr: f64,
    to: f64,
}

/// Plateau pulse with raised-cosine ramps of length `ramp`; crosses `on` at `rise`
/// going up and `off` at `fall` going down.
#[derive(Debug, Clone, Copy)]
struct Pulse {
    start: f64,
    end: f64,
    ramp: f64,
    peak: f64,
}

impl Pulse {
    fn new(rise: f64, fall: f64, peak: f64, on: f64, off: f64, ramp: f64) -> Pulse {
        let lead = ramp / PI * (1.0 - 2.0 * on / peak).acos();
        let trail = ramp / PI * (1.0 - 2.0 * off / peak).acos();
        Pulse { start: rise - lead, end: fall + trail, ramp, peak }
    }

    fn at(&self, t: f64) -> f64 {
        if t < self.start || t > self.end {
            0.0
        } else if t < self.start + self.ramp {
            self.peak * (1.0 - (PI * (t - self.start) / self.ramp).cos()) / 2.0
        } else if t > self.end - self.ramp {
            self.peak * (1.0 - (PI * (self.end - t) / self.ramp).cos()) / 2.0
        } else {
            self.peak
        }
    }
}

fn hann(t: f64, start: f64, end: f64) -> f64 {
    if t <= start || t >= end {
        0.0
    } else {
        (1.0 - (2.0 * PI * (t - start) / (end - start)).cos()) / 2.0
    }
}

fn group_lists(layout: &SensorLayout) -> [Vec<usize>; 3] {
    let midfoot: Vec<usize> =
        (0..SENSOR_COUNT).filter(|i| !layout.heel_group.contains(i) && !layout.forefoot_group.contains(i)).collect();
    [layout.heel_group.clone(), layout.forefoot_group.clone(), midfoot]
}

/// Per-sensor weights with mean 1 that move the group's pressure centre by `bias` mm
/// along x: w = 1 + c·(x − x̄) with c = bias·n / Σ(x − x̄)².
fn lateral_weights(layout: &SensorLayout, group: &[usize], bias: f64) -> Vec<f64> {
    let n = group.len() as f64;
    let xbar = group.iter().map(|&i| layout.positions[i][0]).sum::<f64>() / n;
    let ss: f64 = group.iter().map(|&i| (layout.positions[i][0] - xbar).powi(2)).sum();
    let c = if ss > 0.0 { bias * n / ss } else { 0.0 };
    group.iter().map(|&i| 1.0 + c * (layout.positions[i][0] - xbar)).collect()
}

fn strides(params: &GaitGenParams, foot: FootSide) -> Vec<Stride> {
    let t = params.stride_s();
    let s = params.stance_of(foot);
    let offset = params.first_strike_s
        + match foot {
            FootSide::Left => 0.0,
            FootSide::Right => params.right_phase() * t,
        };
    let first = -((offset / t).ceil() as i64) - 1;
    let last = ((params.duration_s - offset) / t).ceil() as i64 + 1;
    (first..=last)
        .map(|k| {
            let hs = offset + k as f64 * t;
            Stride { hs, ff: hs + 0.2 * s * t, hr: hs + 0.65 * s * t, to: hs + s * t }
        })
        .collect()
}

fn ms(t_s: f64) -> f64 {
    t_s * 1000.0
}

fn foot_frames(
    params: &GaitGenParams,
    foot: FootSide,
    strides: &[Stride],
    rng: &mut ChaCha8Rng,
    extra: &dyn Fn(f64, &mut SensorFrame),
) -> Vec<SensorFrame> {
    let layout = default_layout();
    let [heel, fore, mid] = group_lists(&layout);
    let bias = match foot {
        FootSide::Left => params.lateral_bias_mm[0],
        FootSide::Right => params.lateral_bias_mm[1],
    };
    let w_heel = lateral_weights(&layout, &heel, bias);
    let w_fore = lateral_weights(&layout, &fore, bias);
    let w_mid = lateral_weights(&layout, &mid, bias);
    let heel_peak = params.heel_peak_kpa * heel.len() as f64;
    let fore_peak = params.forefoot_peak_kpa * fore.len() as f64;
    let (on, off, ramp) = (params.theta_on, params.theta_off, params.ramp_s);
    let pulses: Vec<(Pulse, Pulse, Stride)> = strides
        .iter()
        .map(|s| {
            (Pulse::new(s.hs, s.hr, heel_peak, on, off, ramp), Pulse::new(s.ff, s.to, fore_peak, on, off, ramp), *s)
        })
        .collect();
    let noise = Normal::new(0.0, params.noise_sigma_kpa.max(f64::MIN_POSITIVE)).expect("valid sigma");

    let n = (params.duration_s * params.rate_hz).round() as usize;
    let period_ms = 1000.0 / params.rate_hz;
    let mut frames = Vec::with_capacity(n);
    for k in 0..n {
        let offset_ms = (k as f64 * period_ms).round() as u64;
        let t = offset_ms as f64 / 1000.0;
        let mut f = SensorFrame::zeroed(foot, k as u32, params.start_ms + offset_ms);
        f.accel = [0.0, 0.0, GRAVITY];
        f.mag = [20.0, 0.0, -40.0];
        for (hp, fp, s) in &pulses {
            let (h, fo) = (hp.at(t), fp.at(t));
            let m = MIDFOOT_PEAK_KPA * hann(t, s.hs, s.to);
            for (i, &idx) in heel.iter().enumerate() {
                f.pressure[idx] += h / heel.len() as f64 * w_heel[i];
            }
            for (i, &idx) in fore.iter().enumerate() {
                f.pressure[idx] += fo / fore.len() as f64 * w_fore[i];
            }
            for (i, &idx) in mid.iter().enumerate() {
                f.pressure[idx] += m * w_mid[i];
            }
            f.accel[2] += 2.0 * GRAVITY * hann(t, s.hs - 0.015, s.hs + 0.015);
        }
        // swing-phase sagittal rotation between toe-off and the next heel strike
        for pair in strides.windows(2) {
            f.gyro[0] += 250.0 * hann(t, pair[0].to, pair[1].hs);
        }
        for turn in &params.turns {
            if t >= turn.start_s && t <= turn.start_s + turn.duration_s {
                f.gyro[2] += turn.rate_dps;
            }
        }
        extra(t, &mut f);
        if params.noise_sigma_kpa > 0.0 {
            for p in &mut f.pressure {
                *p += noise.sample(rng);
            }
        }
        for p in &mut f.pressure {
            *p = p.clamp(0.0, FULL_SCALE_KPA);
        }
        frames.push(f);
    }
    frames
}

fn truth(params: &GaitGenParams, left: &[Stride], right: &[Stride], excluded_until_s: f64) -> GroundTruth {
    let on = params.theta_on;
    let off = params.theta_off;
    let ramp = params.ramp_s;
    let heel_peak = params.heel_peak_kpa * default_layout().heel_group.len() as f64;
    let fore_peak = params.forefoot_peak_kpa * default_layout().forefoot_group.len() as f64;
    let inside = |s: &Stride| {
        let first = Pulse::new(s.hs, s.hr, heel_peak, on, off, ramp).start;
        let last = Pulse::new(s.ff, s.to, fore_peak, on, off, ramp).end;
        first >= excluded_until_s.max(0.0) && last < params.duration_s - 0.05
    };
    let events = |strides: &[Stride]| -> Vec<TruthEvent> {
        strides
            .iter()
            .filter(|s| inside(s))
            .flat_map(|s| {
                [
                    TruthEvent { kind: EventKind::HeelStrike, t_ms: ms(s.hs) },
                    TruthEvent { kind: EventKind::FootFlat, t_ms: ms(s.ff) },
                    TruthEvent { kind: EventKind::HeelRise, t_ms: ms(s.hr) },
                    TruthEvent { kind: EventKind::ToeOff, t_ms: ms(s.to) },
                ]
            })
            .collect()
    };
    let start = params.start_ms as f64;
    let shift = |mut v: Vec<TruthEvent>| {
        for e in &mut v {
            e.t_ms += start;
        }
        v
    };

    let mut cycles = Vec::new();
    for (foot, own, other) in [(FootSide::Left, left, right), (FootSide::Right, right, left)] {
        for pair in own.windows(2) {
            let (s, next) = (pair[0], pair[1]);
            if !(inside(&s) && inside(&next)) {
                continue;
            }
            let opp_to = other.iter().find(|o| o.to >= s.hs && o.to < next.hs);
            let opp_hs = other.iter().find(|o| o.hs >= s.hs && o.hs < next.hs);
            let (Some(opp_to), Some(opp_hs)) = (opp_to, opp_hs) else { continue };
            let parameters = parameters_from_times([s.hs, s.hr, s.to, next.hs, opp_hs.hs, opp_to.to].map(ms));
            cycles.push(TruthCycle { foot, hs_ms: start + ms(s.hs), next_hs_ms: start + ms(next.hs), parameters });
        }
    }
    cycles.sort_by(|a, b| a.hs_ms.total_cmp(&b.hs_ms));
    GroundTruth { left: shift(events(left)), right: shift(events(right)), cycles }
}

fn generate(params: &GaitGenParams, sit_to_stand_s: f64) -> Result<GeneratedWalk, SimError> {
    params.validate()?;
    let left_strides = strides(params, FootSide::Left);
    let right_strides = strides(params, FootSide::Right);
    let mut rng = ChaCha8Rng::seed_from_u64(params.rng_seed);

    // Rising from a chair: bilateral load ramps up, holds briefly and is released as
    // the first step starts.
    let stand = move |t: f64, f: &mut SensorFrame| {
        if sit_to_stand_s <= 0.0 || t >= sit_to_stand_s {
            return;
        }
        let rise = 0.75 * sit_to_stand_s;
        let level =
            if t < rise { (1.0 - (PI * t / rise).cos()) / 2.0 } else { 1.0 - (t - rise) / (sit_to_stand_s - rise) };
        for p in &mut f.pressure {
            *p += 60.0 * level;
        }
        f.gyro[1] += 40.0 * hann(t, 0.0, rise);
    };
    let skip_before =
        |strides: Vec<Stride>| -> Vec<Stride> { strides.into_iter().filter(|s| s.hs >= sit_to_stand_s).collect() };
    let (left_strides, right_strides) = if sit_to_stand_s > 0.0 {
        (skip_before(left_strides), skip_before(right_strides))
    } else {
        (left_strides, right_strides)
    };

    let left = foot_frames(params, FootSide::Left, &left_strides, &mut rng, &stand);
    let right = foot_frames(params, FootSide::Right, &right_strides, &mut rng, &stand);
    let truth = truth(params, &left_strides, &right_strides, sit_to_stand_s);
    Ok(GeneratedWalk { left, right, truth })
}

pub fn generate_walk(params: &GaitGenParams) -> Result<GeneratedWalk, SimError> {
    generate(params, 0.0)
}

/// Timed up and go: two seconds of sit-to-stand loading, then walking out and back
/// with a 180° turn at mid-duration.
pub fn generate_tug(params: &GaitGenParams) -> Result<GeneratedWalk, SimError> {
    const RISE_S: f64 = 2.0;
    let mut p = params.clone();
    p.first_strike_s = params.first_strike_s + RISE_S;
    if p.turns.is_empty() {
        let mid = RISE_S + (params.duration_s - RISE_S) / 2.0;
        p.turns.push(TurnSpec { start_s: mid - 0.5, duration_s: 1.0, rate_dps: 180.0 });
    }
    generate(&p, RISE_S)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::default_layout;

    fn group_force(f: &SensorFrame, group: &[usize]) -> f64 {
        group.iter().map(|&i| f.pressure[i]).sum()
    }

    #[test]
    fn defaults_are_valid_and_exact() {
        let p = GaitGenParams::default();
        p.validate().unwrap();
        let g = generate_walk(&p).unwrap();
        assert_eq!(g.left.len(), 3000);
        assert_eq!(g.right.len(), 3000);
        assert!(!g.truth.cycles.is_empty());
        for c in &g.truth.cycles {
            assert!((c.parameters.cadence_steps_per_min - 110.0).abs() < 1e-9);
            assert!((c.parameters.stance_pct - 62.0).abs() < 1e-9);
            assert!((c.parameters.double_support_pct - 24.0).abs() < 1e-9);
        }
    }

    #[test]
    fn group_force_crosses_thresholds_at_truth_times() {
        let g = generate_walk(&GaitGenParams::default()).unwrap();
        let layout = default_layout();
        for foot in FootSide::BOTH {
            let frames = g.frames(foot);
            for e in g.truth.events(foot) {
                let (group, rising, level) = match e.kind {
                    EventKind::HeelStrike => (&layout.heel_group, true, 30.0),
                    EventKind::HeelRise => (&layout.heel_group, false, 15.0),
                    EventKind::FootFlat => (&layout.forefoot_group, true, 30.0),
                    EventKind::ToeOff => (&layout.forefoot_group, false, 15.0),
                };
                let k = (e.t_ms / 10.0).floor() as usize;
                let before = group_force(&frames[k], group);
                let after = group_force(&frames[k + 1], group);
                if rising {
                    assert!(before <= level + 1e-9 && after > level, "{e:?} {before} {after}");
                } else {
                    assert!(before >= level - 1e-9 && after < level, "{e:?} {before} {after}");
                }
            }
        }
    }

    #[test]
    fn same_seed_same_frames() {
        let p = GaitGenParams { noise_sigma_kpa: 20.0, rng_seed: 9, ..Default::default() };
        assert_eq!(generate_walk(&p).unwrap(), generate_walk(&p).unwrap());
        let q = GaitGenParams { rng_seed: 10, ..p.clone() };
        assert_ne!(generate_walk(&p).unwrap().left, generate_walk(&q).unwrap().left);
    }

    #[test]
    fn asymmetric_stance_shows_in_truth() {
        let p = GaitGenParams { stance_fraction: 0.63, stance_asymmetry: 0.06, ..Default::default() };
        let g = generate_walk(&p).unwrap();
        for c in &g.truth.cycles {
            let want = if c.foot == FootSide::Left { 60.0 } else { 66.0 };
            assert!((c.parameters.stance_pct - want).abs() < 1e-9);
            assert!((c.parameters.double_support_pct - 26.0).abs() < 1e-9);
        }
    }

    #[test]
    fn inconsistent_double_support_is_rejected() {
        let p = GaitGenParams { double_support_fraction: Some(0.3), ..Default::default() };
        assert!(matches!(p.validate(), Err(SimError::InvalidParams(_))));
        let p = GaitGenParams { double_support_fraction: Some(0.24), ..Default::default() };
        assert!(p.validate().is_ok());
        let p = GaitGenParams { stance_fraction: 0.4, ..Default::default() };
        assert!(p.validate().is_err());
    }

    #[test]
    fn lateral_weights_shift_the_centre_exactly() {
        let layout = default_layout();
        for bias in [-5.0, 0.0, 3.0, 7.5] {
            let group = &layout.forefoot_group;
            let w = lateral_weights(&layout, group, bias);
            let n = group.len() as f64;
            assert!((w.iter().sum::<f64>() - n).abs() < 1e-12);
            let xbar = group.iter().map(|&i| layout.positions[i][0]).sum::<f64>() / n;
            let cx = group.iter().zip(&w).map(|(&i, w)| w * layout.positions[i][0]).sum::<f64>() / n;
            assert!((cx - xbar - bias).abs() < 1e-9);
        }
    }

    #[test]
    fn tug_starts_with_bilateral_loading_and_has_a_turn() {
        let g = generate_tug(&GaitGenParams::default()).unwrap();
        assert!(g.left[100].total_pressure() > 100.0 && g.right[100].total_pressure() > 100.0);
        assert!(g.left.iter().any(|f| f.gyro[2] > 50.0));
        assert!(g.truth.left.iter().all(|e| e.t_ms >= 2000.0));
    }
}
