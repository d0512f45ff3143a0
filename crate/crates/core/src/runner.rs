//! Scenario files and the closed-loop tick loop: simulator, behavior
//! controller and the emulated servo bus.

use std::path::Path;

use nalgebra::Vector2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::behavior::{BehaviorError, BehaviorEvent, BehaviorState, ControlInputs, Controller, PrimitiveName, Trigger};
use crate::config::RobotConfig;
use crate::hal::{HalError, Pca9685Emulator, ServoArray};
use crate::kinematics::{normalize_deg, BodyState};
use crate::sim::{
    raycast_range, sensor_pose, synthesize_imu, Aabb, ImuNoise, SimError, Simulator, TraceRecord, World,
};

pub const DEFAULT_DT_S: f64 = 0.02;
pub const MAX_DT_S: f64 = 0.1;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("scenario parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    World(#[from] SimError),
    #[error(transparent)]
    Behavior(#[from] BehaviorError),
    #[error("servo bus: {0}")]
    Hal(#[from] HalError),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialPose {
    pub x_m: f64,
    pub y_m: f64,
    pub yaw_deg: f64,
    pub roll_deg: f64,
    pub pitch_deg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScenarioEvent {
    /// A user picks the robot up.
    Grab { at_s: f64 },
    /// The user puts it back down.
    Release { at_s: f64 },
    Photo { at_s: f64 },
    Turn { at_s: f64, angle_deg: f64 },
    Explore { at_s: f64 },
    Rest { at_s: f64 },
    Balance { at_s: f64 },
}

impl ScenarioEvent {
    pub fn at_s(&self) -> f64 {
        match *self {
            ScenarioEvent::Grab { at_s }
            | ScenarioEvent::Release { at_s }
            | ScenarioEvent::Photo { at_s }
            | ScenarioEvent::Turn { at_s, .. }
            | ScenarioEvent::Explore { at_s }
            | ScenarioEvent::Rest { at_s }
            | ScenarioEvent::Balance { at_s } => at_s,
        }
    }

    fn trigger(&self) -> Option<Trigger> {
        match *self {
            ScenarioEvent::Photo { .. } => Some(Trigger::Photo),
            ScenarioEvent::Turn { angle_deg, .. } => Some(Trigger::Turn { angle_deg }),
            ScenarioEvent::Explore { .. } => Some(Trigger::Explore),
            ScenarioEvent::Rest { .. } => Some(Trigger::Rest),
            ScenarioEvent::Balance { .. } => Some(Trigger::Balance),
            ScenarioEvent::Grab { .. } | ScenarioEvent::Release { .. } => None,
        }
    }
}

fn default_dt() -> f64 {
    DEFAULT_DT_S
}

fn default_state() -> BehaviorState {
    BehaviorState::Rest
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub duration_s: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_dt")]
    pub dt_s: f64,
    #[serde(default = "default_state")]
    pub initial_state: BehaviorState,
    #[serde(default)]
    pub initial_pose: InitialPose,
    #[serde(default)]
    pub obstacles: Vec<Aabb>,
    #[serde(default)]
    pub events: Vec<ScenarioEvent>,
    #[serde(default)]
    pub imu_noise: ImuNoise,
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let s: Scenario = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::Invalid(m));
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return bad(format!("duration_s must be positive, got {}", self.duration_s));
        }
        if !(self.dt_s > 0.0 && self.dt_s <= MAX_DT_S) {
            return bad(format!("dt_s must be in (0, {MAX_DT_S}], got {}", self.dt_s));
        }
        if let Some(e) = self.events.iter().find(|e| !(e.at_s() >= 0.0)) {
            return bad(format!("event time {} is negative", e.at_s()));
        }
        let n = self.imu_noise;
        if !(n.accel_std_mps2 >= 0.0 && n.gyro_std_dps >= 0.0) {
            return bad("IMU noise deviations must be non-negative".into());
        }
        self.world()?;
        Ok(())
    }

    /// Grab/release pairs as hold intervals; an unmatched grab lasts forever.
    pub fn holds(&self) -> Result<Vec<(f64, f64)>, ScenarioError> {
        let mut edges: Vec<(f64, bool)> = self
            .events
            .iter()
            .filter_map(|e| match *e {
                ScenarioEvent::Grab { at_s } => Some((at_s, true)),
                ScenarioEvent::Release { at_s } => Some((at_s, false)),
                _ => None,
            })
            .collect();
        edges.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut holds = Vec::new();
        let mut open: Option<f64> = None;
        for (t, grab) in edges {
            match (grab, open) {
                (true, None) => open = Some(t),
                (false, Some(g)) => {
                    holds.push((g, t));
                    open = None;
                }
                _ => return Err(ScenarioError::Invalid(format!("unpaired grab/release at {t} s"))),
            }
        }
        if let Some(g) = open {
            holds.push((g, f64::INFINITY));
        }
        Ok(holds)
    }

    pub fn world(&self) -> Result<World, ScenarioError> {
        Ok(World::new(self.obstacles.clone(), self.holds()?)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransitionRecord {
    pub t: f64,
    pub from: BehaviorState,
    pub to: BehaviorState,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub scenario: String,
    pub robot: String,
    pub seed: u64,
    pub duration_s: f64,
    pub ticks: usize,
    /// Planar displacement of the body, cm.
    pub distance_cm: f64,
    /// Displacement along and across the initial heading, cm.
    pub forward_cm: f64,
    pub lateral_cm: f64,
    /// Step length times walking cycles commanded (time spent walking over
    /// the executed cycle duration), cm.
    pub commanded_distance_cm: f64,
    pub heading_change_deg: f64,
    /// Smallest support margin over ticks on the ground; `None` when some
    /// such tick had fewer than three feet down.
    pub min_stability_margin_cm: Option<f64>,
    pub collisions: usize,
    pub avoidance_events: usize,
    pub camera_triggers: usize,
    pub i2c_transactions: usize,
    pub max_tilt_deg: f64,
    pub final_tilt_deg: f64,
    pub final_state: BehaviorState,
    pub transitions: Vec<TransitionRecord>,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub records: Vec<TraceRecord>,
    pub summary: RunSummary,
}

impl RunResult {
    /// The trace as JSON Lines.
    pub fn trace_text(&self) -> String {
        let mut out = String::with_capacity(self.records.len() * 400);
        for r in &self.records {
            out.push_str(&r.to_json_line());
            out.push('\n');
        }
        out
    }
}

/// Command-line overrides of scenario fields.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunOverrides {
    pub duration_s: Option<f64>,
    pub seed: Option<u64>,
}

/// Runs a scenario to completion.
pub fn run_scenario(config: &RobotConfig, scenario: &Scenario, overrides: RunOverrides) -> Result<RunResult, ScenarioError> {
    let mut scenario = scenario.clone();
    if let Some(d) = overrides.duration_s {
        scenario.duration_s = d;
    }
    if let Some(s) = overrides.seed {
        scenario.seed = s;
    }
    scenario.validate()?;
    let world = scenario.world()?;
    let dt = scenario.dt_s;
    let g = config.gravity_mps2;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let noisy = scenario.imu_noise != ImuNoise::default();

    let sim = Simulator::new(config);
    let joints = Controller::settled_pose(config, scenario.initial_state)?;
    let ip = scenario.initial_pose;
    let body = BodyState {
        x: ip.x_m * 100.0,
        y: ip.y_m * 100.0,
        z: 0.0,
        roll: ip.roll_deg,
        pitch: ip.pitch_deg,
        yaw: ip.yaw_deg,
    };
    let mut state = sim.initial_state(body, joints);
    let mut previous = state.clone();
    let start = state.body;
    let mut controller = Controller::new(config, scenario.initial_state, joints)?;
    let mut servos = ServoArray::new(Pca9685Emulator::new(config.servo.i2c_address), config.servo, config.topology)?;

    let mut events: Vec<ScenarioEvent> = scenario.events.clone();
    events.sort_by(|a, b| a.at_s().total_cmp(&b.at_s()));
    let mut next_event = 0;

    let ticks = (scenario.duration_s / dt).round().max(1.0) as usize;
    let mut records = Vec::with_capacity(ticks);
    let mut summary = RunSummary {
        scenario: scenario.name.clone(),
        robot: config.name.clone(),
        seed: scenario.seed,
        duration_s: scenario.duration_s,
        ticks,
        distance_cm: 0.0,
        forward_cm: 0.0,
        lateral_cm: 0.0,
        commanded_distance_cm: 0.0,
        heading_change_deg: 0.0,
        min_stability_margin_cm: Some(f64::INFINITY),
        collisions: 0,
        avoidance_events: 0,
        camera_triggers: 0,
        i2c_transactions: servos.bus().log().len(),
        max_tilt_deg: state.body.tilt_deg(),
        final_tilt_deg: 0.0,
        final_state: scenario.initial_state,
        transitions: Vec::new(),
    };
    let stride = config.behavior.gait.step_length_cm;
    let walk_cycle = controller.walk_cycle_s();
    let mut colliding = false;

    for k in 0..ticks {
        let t = k as f64 * dt;
        let range = raycast_range(&world, &sensor_pose(&state.body));
        let imu = if noisy {
            synthesize_imu(&state, &previous, dt, g, Some((&scenario.imu_noise, &mut rng)))
        } else {
            synthesize_imu(&state, &previous, dt, g, None)
        };
        let mut triggers = Vec::new();
        let mut trace_events = Vec::new();
        while next_event < events.len() && events[next_event].at_s() <= t + 1e-9 {
            let e = &events[next_event];
            match e.trigger() {
                Some(tr) => triggers.push(tr),
                None => trace_events.push(match e {
                    ScenarioEvent::Grab { .. } => "grab".to_string(),
                    _ => "release".to_string(),
                }),
            }
            next_event += 1;
        }

        let out = controller.tick(&ControlInputs {
            t,
            dt,
            range,
            imu,
            triggers,
        });
        servos.bus_mut().clear_log();
        servos.set_poses(&out.commands)?;
        summary.i2c_transactions += servos.bus().log().len();
        let driven = servos.readback_poses();

        let next = sim.step(&world, &state, &driven, dt);

        for e in &out.events {
            match e {
                BehaviorEvent::Transition { from, to } => summary.transitions.push(TransitionRecord {
                    t,
                    from: *from,
                    to: *to,
                }),
                BehaviorEvent::AvoidTurn { .. } => summary.avoidance_events += 1,
                BehaviorEvent::CameraTrigger => summary.camera_triggers += 1,
                _ => {}
            }
            trace_events.push(e.to_string());
        }
        let hit = world.collides(&(Vector2::new(next.body.x, next.body.y) / 100.0));
        if hit && !colliding {
            summary.collisions += 1;
            trace_events.push("collision".to_string());
        }
        colliding = hit;
        if out.primitive == PrimitiveName::WalkForward {
            summary.commanded_distance_cm += stride * dt / walk_cycle;
        }
        summary.heading_change_deg += normalize_deg(next.body.yaw - state.body.yaw);
        if !next.held {
            let m = next.stability_margin();
            summary.min_stability_margin_cm = match summary.min_stability_margin_cm {
                Some(prev) if m.is_finite() => Some(prev.min(m)),
                _ => None,
            };
        }
        summary.max_tilt_deg = summary.max_tilt_deg.max(next.body.tilt_deg());

        records.push(TraceRecord {
            t: (k + 1) as f64 * dt,
            state: out.state.to_string(),
            joints: next.joints.to_vec(),
            body: next.body,
            range,
            imu,
            events: trace_events,
        });
        summary.final_state = out.state;
        previous = state;
        state = next;
    }

    let d = Vector2::new(state.body.x - start.x, state.body.y - start.y);
    let (s, c) = start.yaw.to_radians().sin_cos();
    summary.distance_cm = d.norm();
    summary.forward_cm = c * d.x + s * d.y;
    summary.lateral_cm = -s * d.x + c * d.y;
    summary.final_tilt_deg = state.body.tilt_deg();
    if summary.min_stability_margin_cm == Some(f64::INFINITY) {
        summary.min_stability_margin_cm = None;
    }
    Ok(RunResult { records, summary })
}
