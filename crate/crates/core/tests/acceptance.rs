//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure.

use std::time::{Duration, Instant};

use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use quadstack::behavior::BehaviorState;
use quadstack::cli::{feasibility_report, render_feasibility};
use quadstack::config::{enumerate_attachments, parse_config, total_mass, LegTopology, LinkLengths, RobotConfig};
use quadstack::feasibility::{
    autonomy_minutes, foot_reaction, max_body_weight, peak_power, TorqueArms, TorqueScenario,
};
use quadstack::hal::{
    angle_to_pulse, compute_prescale, off_count, pulse_from_off_count, pulse_to_angle, I2cBus, Pca9685Emulator,
};
use quadstack::kinematics::{leg_fk, leg_ik, physical_pose, stability_margin, FootPosition, LegPose, SupportPolygon};
use quadstack::runner::{run_scenario, RunOverrides, RunResult, Scenario};

type Outcome = Result<String, String>;
type Check = fn() -> Outcome;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn configs() -> Vec<RobotConfig> {
    vec![
        parse_config(include_str!("../../../configs/locoquad-2j.json")).unwrap(),
        parse_config(include_str!("../../../configs/locoquad-3j.json")).unwrap(),
    ]
}

fn within(limit: Duration, start: Instant, what: &str) -> Result<(), String> {
    let took = start.elapsed();
    ensure(took < limit, || format!("{what} took {took:?}"))
}

fn torque_oracle() -> Outcome {
    let start = Instant::now();
    ensure(foot_reaction(600.0, 30.0, 20.0) == 200.0, || "foot_reaction(600, 30, 20) != 200".into())?;
    ensure(foot_reaction(400.0, 0.0, 30.0) == 130.0, || "foot_reaction(400, 0, 30) != 130".into())?;

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let s = TorqueScenario {
            gamma2: rng.gen_range(1.0..50.0),
            gamma3: rng.gen_range(1.0..50.0),
            w2: rng.gen_range(0.0..80.0),
            w3: rng.gen_range(0.0..80.0),
            arms: TorqueArms {
                d1_cm: rng.gen_range(0.5..30.0),
                d2_cm: rng.gen_range(0.0..10.0),
                d3_cm: rng.gen_range(0.0..10.0),
                d4_cm: rng.gen_range(0.0..10.0),
            },
            g: rng.gen_range(9.0..10.5),
        };
        let bw = max_body_weight(&s).map_err(|e| e.to_string())?;
        let lhs = s.equilibrium_lhs();
        worst = worst.max(((s.equilibrium_rhs(bw) - lhs) / lhs).abs());
    }
    ensure(worst <= 1e-9, || format!("round-trip relative error {worst:e}"))?;

    let reference = TorqueScenario {
        gamma2: 18.0,
        gamma3: 18.0,
        w2: 0.0,
        w3: 0.0,
        arms: TorqueArms { d1_cm: 15.3, d2_cm: 4.7, ..TorqueArms::default() },
        g: 9.81,
    };
    let bw = max_body_weight(&reference).map_err(|e| e.to_string())?;
    ensure((bw - 733.9).abs() <= 0.1, || format!("massless-leg limit {bw:.3} g"))?;

    let report = render_feasibility(&feasibility_report(&configs()[0]).map_err(|e| e.to_string())?);
    ensure(
        report.contains("(computed)") && report.contains("published reference") && report.contains("850 g"),
        || "report lacks computed and published limits".into(),
    )?;
    within(Duration::from_secs(1), start, "suite")?;
    Ok(format!("limit {bw:.1} g, worst round-trip {worst:.1e}"))
}

fn power_budget() -> Outcome {
    let start = Instant::now();
    let c = &configs()[1];
    ensure(c.electronics.servo_count == 12, || "3j build should drive 12 servos".into())?;
    let p = peak_power(&c.electronics);
    let rounded = (p.watts * 10.0).round() / 10.0;
    ensure(rounded == 27.5, || format!("peak power {} W", p.watts))?;
    ensure(p.headroom && p.capacity_w == 30.0, || format!("headroom {} of {} W", p.headroom, p.capacity_w))?;
    let minutes = autonomy_minutes(&c.battery, 30.0).map_err(|e| e.to_string())?;
    ensure((minutes - 36.0).abs() <= 0.5, || format!("autonomy {minutes} min"))?;
    within(Duration::from_secs(1), start, "suite")?;
    Ok(format!("{:.2} W peak, {minutes:.1} min at 30 W", p.watts))
}

fn enumeration() -> Outcome {
    let two = enumerate_attachments(LegTopology::TwoJoint).len();
    let three = enumerate_attachments(LegTopology::ThreeJoint).len();
    ensure(two == 4 && three == 16, || format!("{two} and {three} configurations"))?;
    let masses: Vec<f64> = configs().iter().map(total_mass).collect();
    ensure(masses == [560.0, 670.0], || format!("masses {masses:?}"))?;
    Ok("4 / 16 configurations, 560 g / 670 g".into())
}

fn pwm() -> Outcome {
    let prescale = compute_prescale(50.0).map_err(|e| e.to_string())?;
    let oracle = (25_000_000.0f64 / (4096.0 * 50.0)).round() - 1.0;
    ensure(prescale == 121 && prescale as f64 == oracle, || format!("prescale {prescale}"))?;
    let off = off_count(1500.0, 50.0).map_err(|e| e.to_string())?;
    ensure(off == 307 && off as f64 == (1500.0f64 / 20_000.0 * 4096.0).round(), || format!("off {off}"))?;

    let mut dev = Pca9685Emulator::new(0x40);
    dev.write(0x40, &[0x00, 0x20]).map_err(|e| e.to_string())?;
    ensure(dev.write(0x40, &[0xFE, 121]).is_err(), || "PRESCALE accepted while awake".into())?;
    dev.write(0x40, &[0x00, 0x30]).map_err(|e| e.to_string())?;
    ensure(dev.write(0x40, &[0xFE, 121]).is_ok() && dev.prescale() == 121, || "PRESCALE refused while asleep".into())?;

    let mut spec = configs()[0].servo;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..10_000 {
        let rate = rng.gen_range(24.0..200.0);
        let angle = rng.gen_range(0.0..=spec.angular_range_deg);
        spec.update_rate_hz = rate;
        let pulse = angle_to_pulse(&spec, angle).map_err(|e| e.to_string())?;
        let off = off_count(pulse, rate).map_err(|e| e.to_string())?;
        let back = pulse_to_angle(&spec, pulse_from_off_count(off, rate));
        let count_deg = 1e6 / rate / 4096.0 * spec.angular_range_deg / (spec.pulse_max_us - spec.pulse_min_us);
        ensure((back - angle).abs() <= 0.5 * count_deg + 1e-9, || {
            format!("angle {angle} at {rate} Hz came back as {back}")
        })?;
    }
    Ok("prescale 121, off 307, sleep-gated prescale, 10^4 round-trips".into())
}

fn kinematics() -> Outcome {
    let lengths = LinkLengths {
        cog_to_elevator_cm: 10.0,
        elevator_to_knee_cm: 5.3,
        knee_to_foot_cm: 4.7,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    let mut done = 0;
    while done < 10_000 {
        let topology = if rng.gen_bool(0.5) { LegTopology::TwoJoint } else { LegTopology::ThreeJoint };
        let options = enumerate_attachments(topology);
        let a = options[rng.gen_range(0..options.len())];
        let pose = match topology {
            LegTopology::TwoJoint => LegPose {
                rotator_deg: rng.gen_range(-89.0..89.0),
                elevator_deg: None,
                knee_deg: rng.gen_range(-89.0..89.0),
            },
            LegTopology::ThreeJoint => {
                // Knee-down branch, foot ahead of the root.
                let knee = rng.gen_range(-170.0..-1.0) - a.knee_offset_deg();
                let p = LegPose {
                    rotator_deg: rng.gen_range(-89.0..89.0),
                    elevator_deg: Some(rng.gen_range(-89.0..89.0)),
                    knee_deg: knee,
                };
                let phys = physical_pose(&a, &p);
                let e = phys.elevator_deg.unwrap();
                let rho = 5.3 * e.to_radians().cos() + 4.7 * (e + phys.knee_deg).to_radians().cos();
                if knee.abs() > 89.0 || rho <= 0.05 || e.abs() >= 179.0 {
                    continue;
                }
                p
            }
        };
        let target = leg_fk(topology, &a, &pose, &lengths);
        let solved = leg_ik(topology, &a, &target, &lengths).map_err(|e| format!("{pose:?}: {e}"))?;
        worst = worst.max(leg_fk(topology, &a, &solved, &lengths).distance(&target));
        done += 1;
    }
    ensure(worst < 1e-6, || format!("FK/IK error {worst:e} cm"))?;

    for _ in 0..1000 {
        let d = 10.0 + rng.gen_range(1e-4..20.0);
        let (yaw, el): (f64, f64) = (rng.gen_range(-3.1..3.1), rng.gen_range(-1.5..1.5));
        let far = FootPosition::new(d * el.cos() * yaw.cos(), d * el.cos() * yaw.sin(), d * el.sin());
        ensure(leg_ik(LegTopology::ThreeJoint, &Default::default(), &far, &lengths).is_err(), || {
            format!("{far:?} beyond reach solved")
        })?;
    }

    // Convex polygons: points on a circle, query anywhere nearby.
    let cross = |o: &Vector2<f64>, a: &Vector2<f64>, b: &Vector2<f64>| (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
    let mut checked = 0;
    while checked < 1000 {
        let n = rng.gen_range(3..9);
        let r = rng.gen_range(2.0..15.0);
        let mut angles: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..std::f64::consts::TAU)).collect();
        angles.sort_by(f64::total_cmp);
        let pts: Vec<Vector2<f64>> = angles.iter().map(|t| Vector2::new(r * t.cos(), r * t.sin())).collect();
        let q = Vector2::new(rng.gen_range(-1.3 * r..1.3 * r), rng.gen_range(-1.3 * r..1.3 * r));
        // Brute force: inside iff on the left of every consecutive edge.
        let inside = (0..n).all(|i| cross(&pts[i], &pts[(i + 1) % n], &q) > 0.0);
        let near_edge = (0..n).any(|i| cross(&pts[i], &pts[(i + 1) % n], &q).abs() < 1e-9);
        if near_edge {
            continue;
        }
        let m = stability_margin(&SupportPolygon::from_points(&pts), &q);
        ensure((m > 0.0) == inside, || format!("margin {m} for {q:?}, inside {inside}"))?;
        checked += 1;
    }
    Ok(format!("worst FK/IK error {worst:.1e} cm"))
}

fn scenario(name: &str) -> Scenario {
    Scenario::load(format!("{}/../../scenarios/{name}.json", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

fn timed_run(c: &RobotConfig, name: &str) -> Result<RunResult, String> {
    let start = Instant::now();
    let r = run_scenario(c, &scenario(name), RunOverrides::default()).map_err(|e| e.to_string())?;
    within(Duration::from_secs(10), start, name)?;
    Ok(r)
}

fn scenarios() -> Outcome {
    let mut notes = Vec::new();
    for c in configs() {
        let tag = &c.name;
        let walk = timed_run(&c, "walk-10s")?;
        let m = &walk.summary;
        ensure(m.forward_cm >= 0.8 * m.commanded_distance_cm, || {
            format!("{tag} walk {:.2} of {:.2} cm", m.forward_cm, m.commanded_distance_cm)
        })?;
        ensure(m.min_stability_margin_cm.is_some_and(|v| v > 0.0), || {
            format!("{tag} walk margin {:?}", m.min_stability_margin_cm)
        })?;
        notes.push(format!("{tag} walk {:.2}x", m.forward_cm / m.commanded_distance_cm));

        let turn = timed_run(&c, "turn-90")?.summary;
        ensure((turn.heading_change_deg - 90.0).abs() <= 10.0 && turn.distance_cm < 2.0, || {
            format!("{tag} turn {:.2} deg, {:.2} cm", turn.heading_change_deg, turn.distance_cm)
        })?;

        let corridor = timed_run(&c, "obstacle-corridor")?.summary;
        ensure(corridor.collisions == 0 && corridor.avoidance_events >= 1, || {
            format!("{tag} corridor {} collisions, {} avoidance", corridor.collisions, corridor.avoidance_events)
        })?;

        let balance = timed_run(&c, "balance-two-legs")?;
        let initial = balance.records[0].body.tilt_deg();
        ensure(initial >= 9.5, || format!("{tag} balance starts at {initial:.2} deg"))?;
        let late = balance
            .records
            .iter()
            .filter(|r| r.t >= 3.0)
            .map(|r| r.body.tilt_deg())
            .fold(0.0, f64::max);
        ensure(late < 3.0, || format!("{tag} balance tilt {late:.2} deg after 3 s"))?;

        let grab = timed_run(&c, "grab-startup")?.summary;
        let grab_at = scenario("grab-startup").events.iter().map(|e| e.at_s()).fold(f64::INFINITY, f64::min);
        let entered = grab
            .transitions
            .iter()
            .find(|t| t.from == BehaviorState::Rest && t.to == BehaviorState::Interaction)
            .map(|t| t.t);
        ensure(entered.is_some_and(|t| t >= grab_at && t - grab_at <= 0.5), || {
            format!("{tag} grab at {grab_at} s, Interaction at {entered:?}")
        })?;
        notes.push(format!("{tag} turn {:.1} deg", turn.heading_change_deg));
    }
    Ok(notes.join(", "))
}

fn determinism() -> Outcome {
    let mut count = 0;
    for c in configs() {
        for name in ["walk-10s", "turn-90", "obstacle-corridor", "balance-two-legs", "grab-startup"] {
            let a = timed_run(&c, name)?.trace_text();
            let b = timed_run(&c, name)?.trace_text();
            ensure(a == b, || format!("{} {name} traces differ", c.name))?;
            count += 1;
        }
    }
    Ok(format!("{count} scenario runs byte-identical"))
}

fn main() {
    let criteria: [(&str, Check); 7] = [
        ("1 torque equilibrium oracle", torque_oracle),
        ("2 power budget and autonomy", power_budget),
        ("3 configuration enumeration", enumeration),
        ("4 PWM conformance", pwm),
        ("5 kinematics properties", kinematics),
        ("6 scenario regressions", scenarios),
        ("7 end-to-end determinism", determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match check() {
            Ok(note) => println!("PASS {name}: {note}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
