//! Behavior layer: state machine, sensor-driven routines and motion
//! primitives.
//!
//! Transition table (checked in order; anything not listed keeps the state):
//!
//! | from           | condition                       | to                 |
//! |----------------|---------------------------------|--------------------|
//! | any but Interaction | grab detected              | Interaction (beep) |
//! | Initialization | stand settled                   | Rest               |
//! | Rest           | previous grab released here     | Explore            |
//! | Rest           | trigger explore / photo / balance | Explore / PictureShot / BalanceDemo |
//! | Explore        | trigger photo / rest / balance  | PictureShot / Rest / BalanceDemo |
//! | PictureShot    | photo taken and held            | state it came from |
//! | PictureShot    | trigger rest                    | Rest               |
//! | Interaction    | release detected                | Rest               |
//! | BalanceDemo    | trigger rest / explore          | Rest / Explore     |
//!
//! Turn triggers in Rest or Explore start an in-place turn maneuver without
//! leaving the state. Explore walks forward and starts an avoidance turn when
//! the range reading falls below the obstacle threshold.

pub mod executor;
pub mod primitives;

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{BehaviorParams, LegId, RobotConfig, TurnDirection, LEG_COUNT};
use crate::hal::{ImuSample, RangeReading};
use crate::kinematics::LegPose;

pub use executor::Executor;
pub use primitives::{
    primitive_keyframes, Keyframe, MotionPrimitive, PrimitiveError, PrimitiveName, BALANCE_RAISED,
    BALANCE_STANCE,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BehaviorState {
    Initialization,
    Rest,
    Explore,
    PictureShot,
    Interaction,
    BalanceDemo,
}

impl BehaviorState {
    pub const ALL: [BehaviorState; 6] = [
        BehaviorState::Initialization,
        BehaviorState::Rest,
        BehaviorState::Explore,
        BehaviorState::PictureShot,
        BehaviorState::Interaction,
        BehaviorState::BalanceDemo,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BehaviorState::Initialization => "Initialization",
            BehaviorState::Rest => "Rest",
            BehaviorState::Explore => "Explore",
            BehaviorState::PictureShot => "PictureShot",
            BehaviorState::Interaction => "Interaction",
            BehaviorState::BalanceDemo => "BalanceDemo",
        }
    }
}

impl fmt::Display for BehaviorState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Scripted high-level command.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Trigger {
    Photo,
    Turn { angle_deg: f64 },
    Explore,
    Rest,
    Balance,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BehaviorEvent {
    Transition { from: BehaviorState, to: BehaviorState },
    Beep,
    CameraTrigger,
    AvoidTurn { angle_deg: f64 },
    TurnDone { turned_deg: f64 },
}

impl fmt::Display for BehaviorEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BehaviorEvent::Transition { from, to } => write!(f, "transition:{from}->{to}"),
            BehaviorEvent::Beep => f.write_str("beep"),
            BehaviorEvent::CameraTrigger => f.write_str("camera_trigger"),
            BehaviorEvent::AvoidTurn { .. } => f.write_str("avoid_turn"),
            BehaviorEvent::TurnDone { .. } => f.write_str("turn_done"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BehaviorError {
    #[error("IMU window covers {covered:.3} s, need at least {required:.3} s")]
    InsufficientWindow { covered: f64, required: f64 },
    #[error(transparent)]
    Primitive(#[from] PrimitiveError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObstacleAction {
    Continue,
    Turn,
}

/// Turn iff an echo closer than the threshold was received.
pub fn obstacle_policy(range: RangeReading, threshold_m: f64) -> ObstacleAction {
    match range {
        RangeReading::Distance(d) if d < threshold_m => ObstacleAction::Turn,
        _ => ObstacleAction::Continue,
    }
}

fn grab_condition(sample: &ImuSample, params: &BehaviorParams, g: f64) -> bool {
    (sample.accel_norm() - g).abs() > params.grab_accel_fraction * g || sample.tilt_deg() > params.grab_tilt_deg
}

/// Detects a user holding the robot from a window of timestamped samples.
///
/// True iff some run of consecutive samples satisfying the grab condition
/// (specific-force magnitude off by more than the configured fraction of g,
/// or tilt beyond the configured angle) spans at least the persistence time.
pub fn detect_grab(window: &[(f64, ImuSample)], params: &BehaviorParams, g: f64) -> Result<bool, BehaviorError> {
    const EPS: f64 = 1e-9;
    let required = params.grab_persistence_s;
    let covered = match (window.first(), window.last()) {
        (Some(a), Some(b)) => b.0 - a.0,
        _ => 0.0,
    };
    if covered + EPS < required {
        return Err(BehaviorError::InsufficientWindow { covered, required });
    }
    let mut run_start: Option<f64> = None;
    for (t, s) in window {
        if grab_condition(s, params, g) {
            let start = *run_start.get_or_insert(*t);
            if t - start + EPS >= required {
                return Ok(true);
            }
        } else {
            run_start = None;
        }
    }
    Ok(false)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BalanceGains {
    pub kp: f64,
    pub kd: f64,
    pub limit_deg: f64,
}

impl BalanceGains {
    pub fn from_params(p: &BehaviorParams) -> Self {
        Self {
            kp: p.kp,
            kd: p.kd,
            limit_deg: p.correction_limit_deg,
        }
    }
}

/// Joint offsets added to the balance pose.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LegCorrection {
    pub rotator_deg: f64,
    pub knee_deg: f64,
}

/// PD balance on the diagonal stance pair.
///
/// Roll and pitch come from the measured gravity direction, their rates from
/// the gyro. Tilt about the stance diagonal (roll + pitch) is countered by
/// swinging both stance feet across the diagonal with the rotators (PD);
/// tilt along it (pitch - roll) by lengthening one stance leg and shortening
/// the other (P only). Each output is an absolute offset clamped to the limit.
pub fn balance_step(imu: &ImuSample, gains: &BalanceGains) -> [LegCorrection; LEG_COUNT] {
    balance_from_tilt(imu.gravity_roll_pitch(), (imu.gyro[0], imu.gyro[1]), gains)
}

/// [`balance_step`] with the tilt supplied by an estimator.
pub fn balance_from_tilt(tilt: (f64, f64), rates: (f64, f64), gains: &BalanceGains) -> [LegCorrection; LEG_COUNT] {
    let (roll, pitch) = tilt;
    let (roll_rate, pitch_rate) = rates;
    let clamp = |v: f64| v.clamp(-gains.limit_deg, gains.limit_deg);
    let across = clamp(gains.kp * (roll + pitch) + gains.kd * (roll_rate + pitch_rate));
    // Leg lengths set the along-diagonal tilt directly, with no dynamics for
    // a rate term to damp.
    let along = clamp(gains.kp * (pitch - roll));
    let mut out = [LegCorrection::default(); LEG_COUNT];
    let [front, rear] = BALANCE_STANCE;
    out[front.index()] = LegCorrection {
        rotator_deg: -across,
        knee_deg: -along,
    };
    out[rear.index()] = LegCorrection {
        rotator_deg: across,
        knee_deg: along,
    };
    out
}

/// Complementary filter: gyro-propagated roll and pitch, pulled toward the
/// accelerometer's gravity direction with time constant `tau_s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TiltEstimator {
    pub tau_s: f64,
    estimate: Option<(f64, f64)>,
}

impl TiltEstimator {
    pub fn new(tau_s: f64) -> Self {
        Self { tau_s, estimate: None }
    }

    pub fn reset(&mut self) {
        self.estimate = None;
    }

    pub fn estimate(&self) -> Option<(f64, f64)> {
        self.estimate
    }

    /// Folds in one sample; returns (roll, pitch) in degrees.
    pub fn update(&mut self, imu: &ImuSample, dt: f64) -> (f64, f64) {
        let measured = imu.gravity_roll_pitch();
        let next = match self.estimate {
            None => measured,
            Some((roll, pitch)) => {
                let (r, p) = (roll.to_radians(), pitch.to_radians());
                let [gx, gy, gz] = imu.gyro;
                let roll_rate = gx + (r.sin() * gy + r.cos() * gz) * p.tan();
                let pitch_rate = r.cos() * gy - r.sin() * gz;
                let a = self.tau_s / (self.tau_s + dt);
                (
                    a * (roll + roll_rate * dt) + (1.0 - a) * measured.0,
                    a * (pitch + pitch_rate * dt) + (1.0 - a) * measured.1,
                )
            }
        };
        self.estimate = Some(next);
        next
    }
}

/// Inputs that drive state changes, reduced to flags.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Signals {
    pub grab: bool,
    pub release: bool,
    pub explore_pending: bool,
    pub trigger: Option<TriggerKind>,
    pub settled: bool,
    pub routine_done: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TriggerKind {
    Photo,
    Turn,
    Explore,
    Rest,
    Balance,
}

impl Trigger {
    pub fn kind(&self) -> TriggerKind {
        match self {
            Trigger::Photo => TriggerKind::Photo,
            Trigger::Turn { .. } => TriggerKind::Turn,
            Trigger::Explore => TriggerKind::Explore,
            Trigger::Rest => TriggerKind::Rest,
            Trigger::Balance => TriggerKind::Balance,
        }
    }
}

/// The transition table. Total: every state and signal combination has
/// exactly one successor.
pub fn next_state(state: BehaviorState, s: &Signals, resume: BehaviorState) -> BehaviorState {
    use BehaviorState::*;
    if s.grab && state != Interaction {
        return Interaction;
    }
    match (state, s.trigger) {
        (Initialization, _) if s.settled => Rest,
        (Initialization, _) => Initialization,
        (Rest, _) if s.explore_pending => Explore,
        (Rest, Some(TriggerKind::Explore)) => Explore,
        (Rest, Some(TriggerKind::Photo)) => PictureShot,
        (Rest, Some(TriggerKind::Balance)) => BalanceDemo,
        (Rest, _) => Rest,
        (Explore, Some(TriggerKind::Photo)) => PictureShot,
        (Explore, Some(TriggerKind::Rest)) => Rest,
        (Explore, Some(TriggerKind::Balance)) => BalanceDemo,
        (Explore, _) => Explore,
        (PictureShot, Some(TriggerKind::Rest)) => Rest,
        (PictureShot, _) if s.routine_done => resume,
        (PictureShot, _) => PictureShot,
        (Interaction, _) if s.release => Rest,
        (Interaction, _) => Interaction,
        (BalanceDemo, Some(TriggerKind::Rest)) => Rest,
        (BalanceDemo, Some(TriggerKind::Explore)) => Explore,
        (BalanceDemo, _) => BalanceDemo,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum ManeuverKind {
    Avoid,
    Commanded,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Maneuver {
    kind: ManeuverKind,
    left: bool,
    target_deg: f64,
    turned_deg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum PhotoPhase {
    LookingUp,
    Holding { since: f64 },
    Done,
}

/// Per-tick controller inputs. Sensor values arrive by value.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlInputs {
    pub t: f64,
    pub dt: f64,
    pub range: RangeReading,
    pub imu: ImuSample,
    pub triggers: Vec<Trigger>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlOutput {
    pub state: BehaviorState,
    pub primitive: PrimitiveName,
    pub commands: [LegPose; LEG_COUNT],
    pub events: Vec<BehaviorEvent>,
}

#[derive(Debug, Clone)]
struct Library {
    stand: MotionPrimitive,
    walk_forward: MotionPrimitive,
    turn_left: MotionPrimitive,
    turn_right: MotionPrimitive,
    look_up: MotionPrimitive,
    raise_two_legs: MotionPrimitive,
}

impl Library {
    fn build(config: &RobotConfig) -> Result<Self, PrimitiveError> {
        let g = &config.behavior.gait;
        let p = |n| primitive_keyframes(n, g, config);
        Ok(Self {
            stand: p(PrimitiveName::Stand)?,
            walk_forward: p(PrimitiveName::WalkForward)?,
            turn_left: p(PrimitiveName::TurnLeft)?,
            turn_right: p(PrimitiveName::TurnRight)?,
            look_up: p(PrimitiveName::LookUp)?,
            raise_two_legs: p(PrimitiveName::RaiseTwoLegs)?,
        })
    }

    fn get(&self, name: PrimitiveName) -> &MotionPrimitive {
        match name {
            PrimitiveName::WalkForward => &self.walk_forward,
            PrimitiveName::TurnLeft => &self.turn_left,
            PrimitiveName::TurnRight => &self.turn_right,
            PrimitiveName::LookUp => &self.look_up,
            PrimitiveName::RaiseTwoLegs => &self.raise_two_legs,
            _ => &self.stand,
        }
    }
}

/// The behavior controller: state machine, primitive executor and routines.
#[derive(Debug, Clone)]
pub struct Controller {
    params: BehaviorParams,
    gravity: f64,
    joint_limit: f64,
    library: Library,
    executor: Executor,
    state: BehaviorState,
    state_since: f64,
    resume: BehaviorState,
    window: VecDeque<(f64, ImuSample)>,
    pending: VecDeque<Trigger>,
    explore_pending: bool,
    maneuver: Option<Maneuver>,
    photo: PhotoPhase,
    tilt: TiltEstimator,
}

impl Controller {
    /// Starts in `initial` with the joints at `joints`.
    pub fn new(config: &RobotConfig, initial: BehaviorState, joints: [LegPose; LEG_COUNT]) -> Result<Self, BehaviorError> {
        let library = Library::build(config)?;
        let mut executor = Executor::new(joints);
        if initial == BehaviorState::BalanceDemo && joints == *library.raise_two_legs.last_poses() {
            executor.hold(&library.raise_two_legs);
        }
        Ok(Self {
            params: config.behavior,
            gravity: config.gravity_mps2,
            joint_limit: config.servo.half_range_deg(),
            library,
            executor,
            state: initial,
            state_since: 0.0,
            resume: BehaviorState::Rest,
            window: VecDeque::new(),
            pending: VecDeque::new(),
            explore_pending: false,
            maneuver: None,
            photo: PhotoPhase::LookingUp,
            tilt: TiltEstimator::new(config.behavior.tilt_filter_s),
        })
    }

    /// Joint pose a state holds once settled; used to start scenarios
    /// mid-routine.
    pub fn settled_pose(config: &RobotConfig, state: BehaviorState) -> Result<[LegPose; LEG_COUNT], BehaviorError> {
        let g = &config.behavior.gait;
        let name = match state {
            BehaviorState::Initialization => return Ok([LegPose::zero(config.topology); LEG_COUNT]),
            BehaviorState::BalanceDemo => PrimitiveName::RaiseTwoLegs,
            _ => PrimitiveName::Stand,
        };
        Ok(*primitive_keyframes(name, g, config)?.last_poses())
    }

    pub fn state(&self) -> BehaviorState {
        self.state
    }

    /// Duration of one walking cycle as executed.
    pub fn walk_cycle_s(&self) -> f64 {
        self.library.walk_forward.cycle_duration_s()
    }

    fn grab_now(&self) -> bool {
        let w: Vec<_> = self.window.iter().copied().collect();
        detect_grab(&w, &self.params, self.gravity).unwrap_or(false)
    }

    fn enter(&mut self, to: BehaviorState, t: f64, events: &mut Vec<BehaviorEvent>) {
        let from = self.state;
        events.push(BehaviorEvent::Transition { from, to });
        match to {
            BehaviorState::Interaction => {
                events.push(BehaviorEvent::Beep);
                self.explore_pending = from == BehaviorState::Rest;
            }
            BehaviorState::PictureShot => {
                self.photo = PhotoPhase::LookingUp;
                self.resume = if from == BehaviorState::Explore {
                    BehaviorState::Explore
                } else {
                    BehaviorState::Rest
                };
            }
            BehaviorState::Explore => self.explore_pending = false,
            _ => {}
        }
        self.maneuver = None;
        self.tilt.reset();
        self.state = to;
        self.state_since = t;
    }

    fn start_turn(&mut self, kind: ManeuverKind, angle_deg: f64) {
        let left = match kind {
            ManeuverKind::Avoid => self.params.avoid_direction == TurnDirection::Left,
            ManeuverKind::Commanded => angle_deg >= 0.0,
        };
        self.maneuver = Some(Maneuver {
            kind,
            left,
            target_deg: angle_deg.abs(),
            turned_deg: 0.0,
        });
    }

    /// Advances the maneuver; returns whether it is still active.
    fn update_maneuver(&mut self, inputs: &ControlInputs, events: &mut Vec<BehaviorEvent>) -> bool {
        let boundary = self.executor.phase_boundary();
        let blocked = obstacle_policy(inputs.range, self.params.obstacle_threshold_m) == ObstacleAction::Turn;
        let avoid_step = self.params.avoid_turn_deg;
        let Some(m) = &mut self.maneuver else {
            return false;
        };
        m.turned_deg += inputs.imu.gyro[2] * inputs.dt;
        if boundary && m.turned_deg.abs() >= m.target_deg {
            if m.kind == ManeuverKind::Avoid && blocked {
                m.target_deg += avoid_step;
                events.push(BehaviorEvent::AvoidTurn { angle_deg: avoid_step });
            } else {
                events.push(BehaviorEvent::TurnDone {
                    turned_deg: m.turned_deg,
                });
                self.maneuver = None;
                return false;
            }
        }
        true
    }

    fn turn_primitive(&self) -> PrimitiveName {
        match self.maneuver {
            Some(Maneuver { left: false, .. }) => PrimitiveName::TurnRight,
            _ => PrimitiveName::TurnLeft,
        }
    }

    /// One control tick.
    pub fn tick(&mut self, inputs: &ControlInputs) -> ControlOutput {
        let t = inputs.t;
        let mut events = Vec::new();

        self.window.push_back((t, inputs.imu));
        while let Some(&(t0, _)) = self.window.front() {
            if t - t0 > self.params.imu_window_s + 1e-9 {
                self.window.pop_front();
            } else {
                break;
            }
        }
        self.pending.extend(inputs.triggers.iter().copied());

        let grab = self.grab_now();
        let trigger = match self.state {
            BehaviorState::Interaction | BehaviorState::Initialization => None,
            _ => self.pending.pop_front(),
        };
        let signals = Signals {
            grab,
            release: !grab,
            explore_pending: self.explore_pending,
            trigger: trigger.map(|tr| tr.kind()),
            settled: t - self.state_since >= self.params.init_settle_s,
            routine_done: self.photo == PhotoPhase::Done,
        };
        let next = next_state(self.state, &signals, self.resume);
        if next != self.state {
            self.enter(next, t, &mut events);
        }
        if let Some(Trigger::Turn { angle_deg }) = trigger {
            if matches!(self.state, BehaviorState::Rest | BehaviorState::Explore) {
                self.start_turn(ManeuverKind::Commanded, angle_deg);
            }
        }

        let mut balance = None;
        let primitive = match self.state {
            BehaviorState::Initialization | BehaviorState::Interaction => PrimitiveName::Stand,
            BehaviorState::Rest => {
                if self.update_maneuver(inputs, &mut events) {
                    self.turn_primitive()
                } else {
                    PrimitiveName::Stand
                }
            }
            BehaviorState::Explore => {
                let active = self.update_maneuver(inputs, &mut events);
                if active {
                    self.turn_primitive()
                } else if obstacle_policy(inputs.range, self.params.obstacle_threshold_m) == ObstacleAction::Turn {
                    let angle = self.params.avoid_turn_deg;
                    self.start_turn(ManeuverKind::Avoid, angle);
                    events.push(BehaviorEvent::AvoidTurn { angle_deg: angle });
                    self.turn_primitive()
                } else {
                    PrimitiveName::WalkForward
                }
            }
            BehaviorState::PictureShot => {
                match self.photo {
                    PhotoPhase::LookingUp if self.executor.name() == Some(PrimitiveName::LookUp) && self.executor.finished() => {
                        events.push(BehaviorEvent::CameraTrigger);
                        self.photo = PhotoPhase::Holding { since: t };
                    }
                    PhotoPhase::Holding { since } if t - since >= self.params.photo_hold_s => {
                        self.photo = PhotoPhase::Done;
                    }
                    _ => {}
                }
                PrimitiveName::LookUp
            }
            BehaviorState::BalanceDemo => {
                if self.executor.name() == Some(PrimitiveName::RaiseTwoLegs) && self.executor.finished() {
                    let tilt = self.tilt.update(&inputs.imu, inputs.dt);
                    let rates = (inputs.imu.gyro[0], inputs.imu.gyro[1]);
                    balance = Some(balance_from_tilt(tilt, rates, &BalanceGains::from_params(&self.params)));
                }
                PrimitiveName::RaiseTwoLegs
            }
        };

        self.executor.play(self.library.get(primitive));
        let mut commands = self.executor.tick(inputs.dt);
        if let Some(corr) = balance {
            for leg in LegId::ALL {
                let c = corr[leg.index()];
                let p = &mut commands[leg.index()];
                p.rotator_deg += c.rotator_deg;
                p.knee_deg += c.knee_deg;
            }
        }
        let lim = self.joint_limit;
        for p in commands.iter_mut() {
            p.rotator_deg = p.rotator_deg.clamp(-lim, lim);
            p.elevator_deg = p.elevator_deg.map(|e| e.clamp(-lim, lim));
            p.knee_deg = p.knee_deg.clamp(-lim, lim);
        }

        ControlOutput {
            state: self.state,
            primitive,
            commands,
            events,
        }
    }
}
