use insole_core::gait::{analyze_walk, detect_events, ContactConfig, EventKind, GaitEvent, WalkConfig};
use insole_core::ingest::curate;
use insole_core::model::{default_layout, FootSegments, FootSide};
use insole_core::sim::{generate_walk, GaitGenParams, GeneratedWalk, TruthEvent};

const CADENCES: [f64; 4] = [80.0, 100.0, 110.0, 130.0];
const STANCES: [f64; 3] = [0.55, 0.62, 0.70];
/// Truth times are computed in floating point; a crossing that falls exactly on a
/// sample instant may land a few ulps early.
const ROUNDING_MS: f64 = 1e-6;

fn segments(walk: &GeneratedWalk) -> FootSegments {
    FootSegments { left: curate(&walk.left, 100.0).unwrap(), right: curate(&walk.right, 100.0).unwrap() }
}

/// (matched, total, worst error in ms) of truth events against detections.
fn score(truth: &[TruthEvent], detected: &[GaitEvent], tol_ms: f64) -> (usize, usize, f64) {
    let mut matched = 0;
    let mut worst: f64 = 0.0;
    for t in truth {
        let best = detected
            .iter()
            .filter(|d| d.kind == t.kind)
            .map(|d| (d.t_ms as f64 - t.t_ms).abs())
            .fold(f64::INFINITY, f64::min);
        if best <= tol_ms {
            matched += 1;
            worst = worst.max(best);
        }
    }
    (matched, truth.len(), worst)
}

#[test]
fn noise_free_events_match_truth_within_one_sample() {
    let layout = default_layout();
    for cadence in CADENCES {
        for stance in STANCES {
            let p = GaitGenParams { cadence_steps_per_min: cadence, stance_fraction: stance, ..Default::default() };
            let walk = generate_walk(&p).unwrap();
            let segs = segments(&walk);
            for foot in FootSide::BOTH {
                let detected = detect_events(&segs, foot, &layout, &ContactConfig::default());
                let (m, n, worst) = score(walk.truth.events(foot), &detected, 10.0 + ROUNDING_MS);
                assert_eq!(m, n, "cadence {cadence} stance {stance} {foot:?}: worst {worst}");
                // every detection follows its crossing, never precedes it
                for t in walk.truth.events(foot) {
                    let d = detected
                        .iter()
                        .filter(|d| d.kind == t.kind)
                        .find(|d| (d.t_ms as f64 - t.t_ms).abs() <= 10.0 + ROUNDING_MS)
                        .unwrap();
                    assert!(d.t_ms as f64 >= t.t_ms - ROUNDING_MS);
                }
            }
        }
    }
}

#[test]
fn noisy_recall_stays_above_95_percent() {
    let layout = default_layout();
    let (mut matched, mut total) = (0, 0);
    for (i, cadence) in CADENCES.into_iter().enumerate() {
        for (j, stance) in STANCES.into_iter().enumerate() {
            let p = GaitGenParams {
                cadence_steps_per_min: cadence,
                stance_fraction: stance,
                noise_sigma_kpa: 20.0,
                rng_seed: (i * 10 + j) as u64,
                ..Default::default()
            };
            let walk = generate_walk(&p).unwrap();
            let segs = segments(&walk);
            for foot in FootSide::BOTH {
                let detected = detect_events(&segs, foot, &layout, &ContactConfig::default());
                let (m, n, _) = score(walk.truth.events(foot), &detected, 20.0);
                assert!(m as f64 >= 0.9 * n as f64, "cadence {cadence} stance {stance}: {m}/{n}");
                matched += m;
                total += n;
            }
        }
    }
    assert!(matched as f64 >= 0.95 * total as f64, "{matched}/{total}");
}

#[test]
fn cycle_boundaries_equal_truth() {
    let walk = generate_walk(&GaitGenParams::default()).unwrap();
    let a = analyze_walk(&segments(&walk), &default_layout(), &WalkConfig::default()).unwrap();
    for truth in &walk.truth.cycles {
        let found = a
            .cycles
            .iter()
            .find(|c| c.foot == truth.foot && (c.hs_ms as f64 - truth.hs_ms).abs() <= 10.0)
            .unwrap_or_else(|| panic!("no cycle for {truth:?}"));
        assert!((found.next_hs_ms as f64 - truth.next_hs_ms).abs() <= 10.0);
    }
    assert_eq!(a.summary.atypical_count, 0);
}

#[test]
fn parameters_recovered_over_grid() {
    let layout = default_layout();
    for cadence in CADENCES {
        for stance in STANCES {
            let p = GaitGenParams { cadence_steps_per_min: cadence, stance_fraction: stance, ..Default::default() };
            let walk = generate_walk(&p).unwrap();
            let s = analyze_walk(&segments(&walk), &layout, &WalkConfig::default()).unwrap().summary;
            let get = |n: &str| s.parameter(n).unwrap().mean;
            assert!((get("cadence") / cadence - 1.0).abs() < 0.01, "cadence {}", get("cadence"));
            assert!((get("stance") - 100.0 * stance).abs() < 2.0, "stance {}", get("stance"));
            assert!((get("double_support") - 100.0 * (2.0 * stance - 1.0)).abs() < 2.0);
            assert!((s.phase_fractions.stance + s.phase_fractions.swing - 100.0).abs() < 1e-6);
        }
    }
}

#[test]
fn asymmetric_stance_is_significant() {
    let p = GaitGenParams {
        stance_fraction: 0.63,
        stance_asymmetry: 0.06,
        noise_sigma_kpa: 20.0,
        // 30 strides per foot
        duration_s: 34.0,
        rng_seed: 3,
        ..Default::default()
    };
    let walk = generate_walk(&p).unwrap();
    let s = analyze_walk(&segments(&walk), &default_layout(), &WalkConfig::default()).unwrap().summary;
    assert!(s.cycle_count.left >= 25 && s.cycle_count.right >= 25, "{:?}", s.cycle_count);
    let stance = s.parameter("stance").unwrap();
    assert!(stance.p_value.unwrap() < 0.01, "p = {:?}", stance.p_value);
    assert!(stance.mean_right.unwrap() > stance.mean_left.unwrap());
}

#[test]
fn symmetric_p_values_are_spread_out() {
    // Under the null the stance p-values of noisy symmetric walks should not pile up
    // near zero.
    let mut small = 0;
    let runs = 40;
    for seed in 0..runs {
        let p = GaitGenParams { noise_sigma_kpa: 20.0, rng_seed: 1000 + seed, ..Default::default() };
        let walk = generate_walk(&p).unwrap();
        let s = analyze_walk(&segments(&walk), &default_layout(), &WalkConfig::default()).unwrap().summary;
        if let Some(pv) = s.parameter("stance").unwrap().p_value {
            if pv < 0.05 {
                small += 1;
            }
        }
    }
    assert!(small <= 8, "{small} of {runs} runs below 0.05");
}

#[test]
fn turn_cycles_are_excluded() {
    let p = GaitGenParams {
        turns: vec![insole_core::sim::TurnSpec { start_s: 14.0, duration_s: 1.0, rate_dps: 180.0 }],
        ..Default::default()
    };
    let walk = generate_walk(&p).unwrap();
    let a = analyze_walk(&segments(&walk), &default_layout(), &WalkConfig::default()).unwrap();
    assert_eq!(a.turns.len(), 1);
    assert!(a.summary.turn_excluded_count >= 2);
    assert!(a.cycles.iter().all(|c| c.next_hs_ms < 14_000 || c.hs_ms > 15_000));
}

#[test]
fn typical_events_follow_canonical_order() {
    let p = GaitGenParams { noise_sigma_kpa: 20.0, rng_seed: 5, ..Default::default() };
    let walk = generate_walk(&p).unwrap();
    let segs = segments(&walk);
    for foot in FootSide::BOTH {
        let kinds: Vec<EventKind> = detect_events(&segs, foot, &default_layout(), &ContactConfig::default())
            .into_iter()
            .filter(|e| !e.atypical)
            .map(|e| e.kind)
            .collect();
        for w in kinds.windows(2) {
            if w[0] != EventKind::ToeOff {
                assert_eq!(w[1], w[0].next());
            }
        }
    }
}
