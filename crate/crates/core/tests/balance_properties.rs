use insole_core::balance::{
    butterfly, cop_frame, ellipse_area, global_track, sway_analysis, sway_metrics, SwayConfig, WALKING_STANCE_WIDTH_MM,
};
use insole_core::gait::{analyze_walk, WalkConfig};
use insole_core::ingest::{curate, curate_with, CurationConfig};
use insole_core::model::{default_layout, FootSegments, FootSide, SensorFrame, SessionType, SENSOR_COUNT};
use insole_core::sim::{generate_balance, generate_walk, BalanceGenParams, GaitGenParams};
use proptest::prelude::*;

fn frame(pressure: [f64; SENSOR_COUNT]) -> SensorFrame {
    let mut f = SensorFrame::zeroed(FootSide::Right, 0, 0);
    f.pressure = pressure;
    f
}

fn pressures() -> impl Strategy<Value = [f64; SENSOR_COUNT]> {
    prop::array::uniform16(prop_oneof![Just(0.0), 0.0f64..1200.0])
        .prop_filter("above floor", |p| p.iter().sum::<f64>() >= 5.0)
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Monotone-chain convex hull, counter-clockwise.
fn hull(mut pts: Vec<[f64; 2]>) -> Vec<[f64; 2]> {
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<[f64; 2]> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<[f64; 2]> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

fn inside_hull(h: &[[f64; 2]], p: [f64; 2]) -> bool {
    match h.len() {
        1 => (h[0][0] - p[0]).abs() < 1e-9 && (h[0][1] - p[1]).abs() < 1e-9,
        2 => {
            let c = cross(h[0], h[1], p).abs();
            let len = (h[1][0] - h[0][0]).hypot(h[1][1] - h[0][1]);
            c / len < 1e-9
        }
        _ => (0..h.len()).all(|i| cross(h[i], h[(i + 1) % h.len()], p) >= -1e-9),
    }
}

#[test]
fn cop_identities() {
    let layout = default_layout();
    for i in 0..SENSOR_COUNT {
        let mut p = [0.0; SENSOR_COUNT];
        p[i] = 100.0;
        let c = cop_frame(&frame(p), &layout).unwrap();
        assert!((c.x_mm - layout.positions[i][0]).abs() <= 1e-9 && (c.y_mm - layout.positions[i][1]).abs() <= 1e-9);
        for j in 0..SENSOR_COUNT {
            let mut p = [0.0; SENSOR_COUNT];
            p[i] += 70.0;
            p[j] += 70.0;
            let c = cop_frame(&frame(p), &layout).unwrap();
            let mid = [
                (layout.positions[i][0] + layout.positions[j][0]) / 2.0,
                (layout.positions[i][1] + layout.positions[j][1]) / 2.0,
            ];
            assert!((c.x_mm - mid[0]).abs() <= 1e-9 && (c.y_mm - mid[1]).abs() <= 1e-9);
        }
    }
    let c = cop_frame(&frame([42.0; SENSOR_COUNT]), &layout).unwrap();
    let direct_x = layout.positions.iter().map(|p| p[0]).sum::<f64>() / SENSOR_COUNT as f64;
    let direct_y = layout.positions.iter().map(|p| p[1]).sum::<f64>() / SENSOR_COUNT as f64;
    assert!((c.x_mm - direct_x).abs() <= 1e-9 && (c.y_mm - direct_y).abs() <= 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn cop_is_scale_invariant_and_translation_equivariant(
        p in pressures(),
        k in 0.01f64..100.0,
        dx in -500.0f64..500.0,
        dy in -500.0f64..500.0,
    ) {
        let layout = default_layout();
        let base = cop_frame(&frame(p), &layout).unwrap();
        let scaled = cop_frame(&frame(p.map(|v| v * k.max(5.0 / p.iter().sum::<f64>()))), &layout).unwrap();
        prop_assert!((base.x_mm - scaled.x_mm).abs() < 1e-9 && (base.y_mm - scaled.y_mm).abs() < 1e-9);
        let moved = cop_frame(&frame(p), &layout.translated(dx, dy)).unwrap();
        prop_assert!((moved.x_mm - base.x_mm - dx).abs() < 1e-9 && (moved.y_mm - base.y_mm - dy).abs() < 1e-9);
    }

    #[test]
    fn cop_lies_in_hull_of_active_sensors(p in pressures()) {
        let layout = default_layout();
        let c = cop_frame(&frame(p), &layout).unwrap();
        let active: Vec<[f64; 2]> = (0..SENSOR_COUNT).filter(|&i| p[i] > 0.0).map(|i| layout.positions[i]).collect();
        prop_assert!(inside_hull(&hull(active), [c.x_mm, c.y_mm]));
    }

    #[test]
    fn path_length_survives_time_reversal(pts in prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 2..200)) {
        let pts: Vec<[f64; 2]> = pts.into_iter().map(|(x, y)| [x, y]).collect();
        let mut rev = pts.clone();
        rev.reverse();
        let (a, b) = (sway_metrics(&pts, 10.0), sway_metrics(&rev, 10.0));
        prop_assert!((a.path_length_mm - b.path_length_mm).abs() < 1e-9 * (1.0 + a.path_length_mm));
    }

    #[test]
    fn ellipse_area_is_rotation_invariant(
        pts in prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 3..200),
        angle in 0.0f64..std::f64::consts::TAU,
    ) {
        let pts: Vec<[f64; 2]> = pts.into_iter().map(|(x, y)| [x, y]).collect();
        let (s, c) = angle.sin_cos();
        let rotated: Vec<[f64; 2]> = pts.iter().map(|p| [c * p[0] - s * p[1], s * p[0] + c * p[1]]).collect();
        let (a, b) = (ellipse_area(&pts), ellipse_area(&rotated));
        prop_assert!((a - b).abs() < 1e-6 * (1.0 + a));
    }
}

fn balance_segments(p: &BalanceGenParams) -> FootSegments {
    let g = generate_balance(p).unwrap();
    let cfg = CurationConfig::without_baseline();
    FootSegments {
        left: curate_with(&g.left, 100.0, &cfg).unwrap(),
        right: curate_with(&g.right, 100.0, &cfg).unwrap(),
    }
}

#[test]
fn generated_balance_cop_matches_truth() {
    let g = generate_balance(&BalanceGenParams { rng_seed: 4, ..Default::default() }).unwrap();
    let layout = default_layout().for_foot(FootSide::Left);
    let sq: f64 = g
        .left
        .iter()
        .zip(&g.truth.left_cop)
        .map(|(f, t)| {
            let c = cop_frame(f, &layout).unwrap();
            (c.x_mm - t[0]).powi(2) + (c.y_mm - t[1]).powi(2)
        })
        .sum();
    assert!((sq / g.left.len() as f64).sqrt() < 1.0);
}

#[test]
fn still_standing_has_zero_sway() {
    let p = BalanceGenParams { amplitude_eo_mm: 0.0, amplitude_ec_mm: 0.0, ..Default::default() };
    let a = sway_analysis(
        SessionType::StandingBalance,
        &balance_segments(&p),
        100.0,
        &default_layout(),
        &SwayConfig::default(),
    )
    .unwrap();
    for r in [&a.eyes_open, &a.eyes_closed] {
        for s in [&r.left, &r.right, &r.combined] {
            let m = s.metrics;
            for v in [
                m.ml_range_mm,
                m.ap_range_mm,
                m.ml_rms_mm,
                m.ap_rms_mm,
                m.path_length_mm,
                m.mean_velocity_mm_s,
                m.ellipse_area_mm2,
            ] {
                assert!(v.abs() < 1e-9, "{m:?}");
            }
        }
    }
    assert_eq!(a.romberg_ratio, None);
}

#[test]
fn romberg_ratio_tracks_amplitude_ratio() {
    let mut ratios = Vec::new();
    for seed in 0..20 {
        let p = BalanceGenParams { amplitude_eo_mm: 1.5, amplitude_ec_mm: 3.0, rng_seed: seed, ..Default::default() };
        let a = sway_analysis(
            SessionType::StandingBalance,
            &balance_segments(&p),
            100.0,
            &default_layout(),
            &SwayConfig::default(),
        )
        .unwrap();
        let r = a.romberg_ratio.unwrap();
        assert!((r - 2.0).abs() <= 0.4, "seed {seed}: {r}");
        assert_eq!(a.eyes_open.combined.t_ms.len(), 1000);
        ratios.push(r);
    }
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    assert!((mean - 2.0).abs() < 0.1, "{mean}");
}

fn symmetry_for_bias(bias: f64) -> f64 {
    let p = GaitGenParams { lateral_bias_mm: [bias, 0.0], ..Default::default() };
    let walk = generate_walk(&p).unwrap();
    let segs = FootSegments { left: curate(&walk.left, 100.0).unwrap(), right: curate(&walk.right, 100.0).unwrap() };
    let layout = default_layout();
    let a = analyze_walk(&segs, &layout, &WalkConfig::default()).unwrap();
    let track = global_track(&segs.left[0].frames, &segs.right[0].frames, &layout, 100.0, WALKING_STANCE_WIDTH_MM);
    butterfly(&track, &a.cycles).unwrap().symmetry_index
}

#[test]
fn butterfly_symmetry_follows_lateral_bias() {
    let s0 = symmetry_for_bias(0.0);
    assert!(s0 < 0.05, "{s0}");
    let mut last = s0;
    for bias in [2.0, 4.0, 6.0, 8.0, 10.0] {
        let s = symmetry_for_bias(bias);
        assert!(s > last, "bias {bias}: {s} <= {last}");
        last = s;
    }
}
