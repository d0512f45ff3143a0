use nalgebra::Vector2;
use proptest::prelude::*;
use quadstack::behavior::{primitive_keyframes, MotionPrimitive, PrimitiveName};
use quadstack::config::{parse_config, GaitParams, LegId, RobotConfig, LEG_COUNT};
use quadstack::kinematics::{stability_margin, SupportPolygon};
use quadstack::runner::{run_scenario, RunOverrides, Scenario};
use quadstack::sim::Simulator;

const CONFIG_2J: &str = include_str!("../../../configs/locoquad-2j.json");
const CONFIG_3J: &str = include_str!("../../../configs/locoquad-3j.json");

fn configs() -> [RobotConfig; 2] {
    [parse_config(CONFIG_2J).unwrap(), parse_config(CONFIG_3J).unwrap()]
}

fn scenario(name: &str) -> Scenario {
    Scenario::load(format!("{}/../../scenarios/{name}.json", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

/// Stance feet (within 1 mm of the lowest) and the margin of their polygon
/// around the body origin, for every keyframe.
fn keyframe_support(config: &RobotConfig, p: &MotionPrimitive) -> Vec<(usize, f64)> {
    let sim = Simulator::new(config);
    p.keyframes
        .iter()
        .map(|k| {
            let feet = sim.feet_in_body(&k.poses);
            let low = feet.iter().map(|f| f.z).fold(f64::INFINITY, f64::min);
            let stance: Vec<Vector2<f64>> = feet.iter().filter(|f| f.z - low <= 0.1).map(|f| f.xy()).collect();
            let margin = stability_margin(&SupportPolygon::from_points(&stance), &Vector2::zeros());
            (stance.len(), margin)
        })
        .collect()
}

#[test]
fn shipped_gaits_keep_three_feet_and_positive_margin() {
    for c in configs() {
        for name in [
            PrimitiveName::WalkForward,
            PrimitiveName::WalkBackward,
            PrimitiveName::TurnLeft,
            PrimitiveName::TurnRight,
        ] {
            let p = primitive_keyframes(name, &c.behavior.gait, &c).unwrap();
            for (i, (n, m)) in keyframe_support(&c, &p).into_iter().enumerate() {
                assert!(n >= 3, "{} {:?} keyframe {i}: {n} feet", c.name, name);
                assert!(m > 0.0, "{} {:?} keyframe {i}: margin {m}", c.name, name);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn crawl_safety_over_gait_parameters(
        three in any::<bool>(),
        step in 1.0..3.5f64,
        height in 1.0..3.0f64,
        cycle in 1.5..4.0f64,
    ) {
        let c = &configs()[three as usize];
        let gait = GaitParams { step_length_cm: step, step_height_cm: height, cycle_time_s: cycle, ..c.behavior.gait };
        let Ok(p) = primitive_keyframes(PrimitiveName::WalkForward, &gait, c) else {
            return Err(TestCaseError::reject("unreachable gait"));
        };
        for (n, m) in keyframe_support(c, &p) {
            prop_assert!(n >= 3);
            prop_assert!(m > 0.0, "margin {}", m);
        }
    }
}

#[test]
fn turn_right_feet_mirror_turn_left() {
    for c in configs() {
        let sim = Simulator::new(&c);
        let left = primitive_keyframes(PrimitiveName::TurnLeft, &c.behavior.gait, &c).unwrap();
        let right = primitive_keyframes(PrimitiveName::TurnRight, &c.behavior.gait, &c).unwrap();
        assert_eq!(left.keyframes.len(), right.keyframes.len());
        for (l, r) in left.keyframes.iter().zip(&right.keyframes) {
            assert_eq!(l.duration_s, r.duration_s);
            let fl = sim.feet_in_body(&l.poses);
            let fr = sim.feet_in_body(&r.poses);
            for leg in LegId::ALL {
                let a = fl[leg.mirrored().index()];
                let b = fr[leg.index()];
                assert!((a.x - b.x).abs() < 1e-9 && (a.y + b.y).abs() < 1e-9 && (a.z - b.z).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn same_seed_same_trace() {
    let c = &configs()[0];
    for name in ["walk-10s", "grab-startup"] {
        let s = scenario(name);
        let a = run_scenario(c, &s, RunOverrides::default()).unwrap().trace_text();
        let b = run_scenario(c, &s, RunOverrides::default()).unwrap().trace_text();
        assert_eq!(a, b, "{name}");
        let other = run_scenario(c, &s, RunOverrides { seed: Some(s.seed + 1), ..Default::default() })
            .unwrap()
            .trace_text();
        assert_ne!(a, other, "{name}: noise should depend on the seed");
    }
}

#[test]
fn trace_lines_follow_the_schema() {
    let c = &configs()[1];
    let s = scenario("obstacle-corridor");
    let r = run_scenario(c, &s, RunOverrides { duration_s: Some(8.0), ..Default::default() }).unwrap();
    let mut last = 0.0;
    for (k, line) in r.trace_text().lines().enumerate() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        for key in ["t", "state", "joints", "body", "range_m", "accel", "gyro", "events"] {
            assert!(keys.contains(&key), "line {k} lacks {key}");
        }
        let t = v["t"].as_f64().unwrap();
        assert!((t - last - s.dt_s).abs() < 1e-9, "line {k}: t {t} after {last}");
        last = t;
        assert_eq!(v["joints"].as_array().unwrap().len(), LEG_COUNT);
        assert_eq!(v["joints"][0].as_array().unwrap().len(), 3);
        assert!(v["range_m"].is_null() || v["range_m"].as_f64().unwrap() > 0.0);
    }
    assert_eq!(r.records.len(), 400);
}

#[test]
fn balance_settles_and_holds() {
    for c in configs() {
        let r = run_scenario(&c, &scenario("balance-two-legs"), RunOverrides::default()).unwrap();
        let first = r.records.first().unwrap().body.tilt_deg();
        assert!(first > 9.0, "starts tilted, got {first}");
        for rec in r.records.iter().filter(|rec| rec.t >= 3.0) {
            assert!(rec.body.tilt_deg() < 3.0, "{} at {}: {}", c.name, rec.t, rec.body.tilt_deg());
        }
    }
}

#[test]
fn walking_drift_stays_small() {
    for c in configs() {
        let m = run_scenario(&c, &scenario("walk-10s"), RunOverrides::default()).unwrap().summary;
        assert!(m.forward_cm >= 0.8 * m.commanded_distance_cm, "{}: {m:?}", c.name);
        assert!(m.lateral_cm.abs() < 0.1 * m.distance_cm, "{}: {m:?}", c.name);
        assert!(m.min_stability_margin_cm.is_some_and(|v| v > 0.0));
    }
}
