//! Keyframed motion primitives.
//!
//! Foot targets are built in the body frame and converted to joint angles by
//! inverse kinematics. Two-joint legs can only place a foot on the circle
//! swept by the rotator at a given height, so longitudinal offsets are
//! realised by sliding along that circle; three-joint legs move in straight
//! lines.

use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;
use serde::Serialize;
use thiserror::Error;

use crate::config::{GaitParams, LegId, LegTopology, RobotConfig, LEG_COUNT};
use crate::kinematics::{body_to_leg, leg_ik, KinematicsError, LegPose};

/// Keyframes per crawl phase: shift, lift, swing, place.
pub const PHASE_KEYFRAMES: usize = 4;

const WAVE_SWEEP_DEG: f64 = 20.0;
const SWING_AMPLITUDE_CM: f64 = 1.0;
const DEPTH_MARGIN_CM: f64 = 0.05;
const MIN_CLEARANCE_CM: f64 = 0.5;
/// Extra time allowed over the pure slew time of a keyframe.
const SLEW_MARGIN: f64 = 1.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PrimitiveName {
    Stand,
    WalkForward,
    WalkBackward,
    TurnLeft,
    TurnRight,
    Wave,
    Swing,
    LookUp,
    RaiseTwoLegs,
}

impl PrimitiveName {
    pub const ALL: [PrimitiveName; 9] = [
        PrimitiveName::Stand,
        PrimitiveName::WalkForward,
        PrimitiveName::WalkBackward,
        PrimitiveName::TurnLeft,
        PrimitiveName::TurnRight,
        PrimitiveName::Wave,
        PrimitiveName::Swing,
        PrimitiveName::LookUp,
        PrimitiveName::RaiseTwoLegs,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PrimitiveName::Stand => "stand",
            PrimitiveName::WalkForward => "walk_forward",
            PrimitiveName::WalkBackward => "walk_backward",
            PrimitiveName::TurnLeft => "turn_left",
            PrimitiveName::TurnRight => "turn_right",
            PrimitiveName::Wave => "wave",
            PrimitiveName::Swing => "swing",
            PrimitiveName::LookUp => "look_up",
            PrimitiveName::RaiseTwoLegs => "raise_two_legs",
        }
    }

    /// Walking and turning gaits.
    pub fn is_locomotion(self) -> bool {
        matches!(
            self,
            PrimitiveName::WalkForward
                | PrimitiveName::WalkBackward
                | PrimitiveName::TurnLeft
                | PrimitiveName::TurnRight
        )
    }
}

impl fmt::Display for PrimitiveName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PrimitiveName {
    type Err = PrimitiveError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PrimitiveName::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| PrimitiveError::Unknown(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PrimitiveError {
    #[error("unknown primitive '{0}'")]
    Unknown(String),
    #[error("invalid gait parameters: {0}")]
    InvalidParams(String),
    #[error("{leg} cannot reach keyframe target: {source}")]
    Unreachable {
        leg: &'static str,
        #[source]
        source: KinematicsError,
    },
}

/// Target of one keyframe: joint poses reached after `duration_s`.
#[derive(Debug, Clone, PartialEq)]
pub struct Keyframe {
    pub poses: [LegPose; LEG_COUNT],
    pub duration_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotionPrimitive {
    pub name: PrimitiveName,
    pub keyframes: Vec<Keyframe>,
    /// Cyclic primitives end on the pose of their first keyframe and repeat
    /// from the second.
    pub cyclic: bool,
    /// Keyframes per gait phase; 0 for non-gait primitives.
    pub phase_len: usize,
}

impl MotionPrimitive {
    pub fn last_poses(&self) -> &[LegPose; LEG_COUNT] {
        &self.keyframes[self.keyframes.len() - 1].poses
    }

    pub fn total_duration_s(&self) -> f64 {
        self.keyframes.iter().map(|k| k.duration_s).sum()
    }

    /// Duration of one repetition of a cyclic primitive (the entry keyframe
    /// excluded).
    pub fn cycle_duration_s(&self) -> f64 {
        self.keyframes.iter().skip(1).map(|k| k.duration_s).sum()
    }

    /// Reflection through the sagittal plane: left and right legs swap and
    /// rotator angles change sign.
    pub fn mirrored(&self, name: PrimitiveName) -> MotionPrimitive {
        let keyframes = self
            .keyframes
            .iter()
            .map(|k| Keyframe {
                poses: mirror_poses(&k.poses),
                duration_s: k.duration_s,
            })
            .collect();
        MotionPrimitive {
            name,
            keyframes,
            cyclic: self.cyclic,
            phase_len: self.phase_len,
        }
    }
}

pub fn mirror_poses(poses: &[LegPose; LEG_COUNT]) -> [LegPose; LEG_COUNT] {
    let mut out = *poses;
    for leg in LegId::ALL {
        let src = poses[leg.mirrored().index()];
        out[leg.index()] = LegPose {
            rotator_deg: -src.rotator_deg,
            ..src
        };
    }
    out
}

/// Placement of one foot relative to its neutral stance position.
#[derive(Debug, Clone, Copy, Default)]
struct FootTarget {
    /// Longitudinal shift in the body frame, cm.
    dx: f64,
    /// Rotation about the leg root, degrees.
    dbeta: f64,
    /// Height below (negative) the body origin, cm.
    z: f64,
    /// Height used to place the foot on its stance circle; differs from `z`
    /// while the foot is lifted.
    z_ref: f64,
}

struct Builder<'a> {
    config: &'a RobotConfig,
    height: f64,
}

impl<'a> Builder<'a> {
    fn new(config: &'a RobotConfig, height: f64) -> Self {
        Self { config, height }
    }

    fn ground(&self) -> FootTarget {
        FootTarget {
            z: -self.height,
            z_ref: -self.height,
            ..FootTarget::default()
        }
    }

    /// Horizontal distance from root to foot at a given height.
    fn radius(&self, z: f64) -> Result<f64, PrimitiveError> {
        let links = &self.config.links;
        match self.config.topology {
            LegTopology::TwoJoint => {
                let l2 = links.knee_to_foot_cm;
                if z.abs() > l2 {
                    return Err(PrimitiveError::InvalidParams(format!(
                        "foot height {z} cm beyond the {l2} cm distal link"
                    )));
                }
                Ok(links.elevator_to_knee_cm + (l2 * l2 - z * z).sqrt())
            }
            LegTopology::ThreeJoint => Ok(self.config.behavior.stance_radius_cm),
        }
    }

    fn foot(&self, leg: LegId, t: &FootTarget) -> Result<Vector3<f64>, PrimitiveError> {
        let root = self.config.root(leg);
        let beta = (root.mount_yaw_deg + t.dbeta).to_radians();
        match self.config.topology {
            LegTopology::TwoJoint => {
                let r_ref = self.radius(t.z_ref)?;
                let x = r_ref * beta.cos() + t.dx;
                let c = x / r_ref;
                if c.abs() > 1.0 {
                    return Err(PrimitiveError::InvalidParams(format!(
                        "{} offset {:.3} cm leaves the reachable circle",
                        leg.short_name(),
                        t.dx
                    )));
                }
                let side = if beta.sin() >= 0.0 { 1.0 } else { -1.0 };
                let b = side * c.acos();
                let r = self.radius(t.z)?;
                Ok(Vector3::new(root.x_cm + r * b.cos(), root.y_cm + r * b.sin(), t.z))
            }
            LegTopology::ThreeJoint => {
                let r = self.radius(t.z)?;
                Ok(Vector3::new(
                    root.x_cm + r * beta.cos() + t.dx,
                    root.y_cm + r * beta.sin(),
                    t.z,
                ))
            }
        }
    }

    fn pose(&self, leg: LegId, t: &FootTarget) -> Result<LegPose, PrimitiveError> {
        let p = self.foot(leg, t)?;
        let local = body_to_leg(self.config.root(leg), &p);
        leg_ik(self.config.topology, self.config.attachment(leg), &local, &self.config.links).map_err(|source| {
            PrimitiveError::Unreachable {
                leg: leg.short_name(),
                source,
            }
        })
    }

    fn frame(&self, targets: &[FootTarget; LEG_COUNT], duration_s: f64) -> Result<Keyframe, PrimitiveError> {
        let mut poses = [LegPose::zero(self.config.topology); LEG_COUNT];
        for leg in LegId::ALL {
            poses[leg.index()] = self.pose(leg, &targets[leg.index()])?;
        }
        Ok(Keyframe { poses, duration_s })
    }

    /// Deepest reachable foot height below the body origin.
    fn max_depth(&self) -> f64 {
        let links = &self.config.links;
        match self.config.topology {
            LegTopology::TwoJoint => links.knee_to_foot_cm - DEPTH_MARGIN_CM,
            LegTopology::ThreeJoint => {
                let reach = links.elevator_to_knee_cm + links.knee_to_foot_cm;
                let r = self.config.behavior.stance_radius_cm;
                (reach * reach - r * r).max(0.0).sqrt() - DEPTH_MARGIN_CM
            }
        }
    }
}

fn validate(params: &GaitParams) -> Result<(), PrimitiveError> {
    let bad = |m: &str| Err(PrimitiveError::InvalidParams(m.to_string()));
    if !(params.step_length_cm > 0.0) {
        return bad("step_length_cm must be positive");
    }
    if !(params.step_height_cm > 0.0) {
        return bad("step_height_cm must be positive");
    }
    if !(params.cycle_time_s > 0.0) {
        return bad("cycle_time_s must be positive");
    }
    let mut seen = [false; LEG_COUNT];
    for leg in params.stance_order {
        if std::mem::replace(&mut seen[leg.index()], true) {
            return bad("stance_order must be a permutation of the four legs");
        }
    }
    Ok(())
}

/// Body-frame foot shift that moves the centre of gravity away from the leg
/// about to swing.
fn sway_dx(config: &RobotConfig, swing: LegId) -> f64 {
    let s = config.behavior.sway_cm;
    if swing.is_front() {
        s
    } else {
        -s
    }
}

#[derive(Clone, Copy)]
enum GaitKind {
    Walk,
    Turn,
}

/// Crawl gait: one leg swings per phase while the other three push the body.
/// Each leg starts the cycle at a staggered offset so that the cycle closes.
fn crawl(b: &Builder, params: &GaitParams, kind: GaitKind) -> Result<Vec<Keyframe>, PrimitiveError> {
    let config = b.config;
    let dt = params.cycle_time_s / (PHASE_KEYFRAMES * LEG_COUNT) as f64;
    // Stride expressed per leg: cm along x for walking, degrees about the
    // root for turning (arc length equal to the step length).
    let stride = match kind {
        GaitKind::Walk => params.step_length_cm,
        GaitKind::Turn => (params.step_length_cm / b.radius(-b.height)?).to_degrees(),
    };
    let mut offsets = [0.0; LEG_COUNT];
    for (k, leg) in params.stance_order.iter().enumerate() {
        offsets[leg.index()] = stride * (-3.0 / 8.0 + k as f64 / 4.0);
    }
    let targets = |offsets: &[f64; LEG_COUNT], sway: f64, lifted: Option<LegId>| {
        let mut out = [b.ground(); LEG_COUNT];
        for leg in LegId::ALL {
            let t = &mut out[leg.index()];
            t.dx = sway;
            match kind {
                GaitKind::Walk => t.dx += offsets[leg.index()],
                GaitKind::Turn => t.dbeta = offsets[leg.index()],
            }
            if lifted == Some(leg) {
                t.z += params.step_height_cm;
            }
        }
        out
    };

    let last = params.stance_order[LEG_COUNT - 1];
    let mut frames = vec![b.frame(&targets(&offsets, sway_dx(config, last), None), dt)?];
    for &leg in &params.stance_order {
        let sway = sway_dx(config, leg);
        frames.push(b.frame(&targets(&offsets, sway, None), dt)?);
        frames.push(b.frame(&targets(&offsets, sway, Some(leg)), dt)?);
        for other in LegId::ALL {
            offsets[other.index()] += if other == leg { 0.75 * stride } else { -0.25 * stride };
        }
        frames.push(b.frame(&targets(&offsets, sway, Some(leg)), dt)?);
        frames.push(b.frame(&targets(&offsets, sway, None), dt)?);
    }
    // Offsets return to their start after a full cycle; pin the final pose to
    // the first so the loop is exactly closed.
    let n = frames.len();
    frames[n - 1].poses = frames[0].poses;
    Ok(frames)
}

/// Builds the keyframe sequence of a named primitive for the given robot.
pub fn primitive_keyframes(
    name: PrimitiveName,
    params: &GaitParams,
    config: &RobotConfig,
) -> Result<MotionPrimitive, PrimitiveError> {
    validate(params)?;
    let bp = &config.behavior;
    let b = Builder::new(config, bp.stance_height_cm);
    let settle = params.cycle_time_s / 4.0;
    let single = |keyframes: Vec<Keyframe>, cyclic: bool, phase_len: usize| MotionPrimitive {
        name,
        keyframes,
        cyclic,
        phase_len,
    };
    let stand = [b.ground(); LEG_COUNT];

    let primitive = match name {
        PrimitiveName::Stand => single(vec![b.frame(&stand, settle)?], false, 0),
        PrimitiveName::WalkForward => single(crawl(&b, params, GaitKind::Walk)?, true, PHASE_KEYFRAMES),
        PrimitiveName::WalkBackward => {
            let mut frames = crawl(&b, params, GaitKind::Walk)?;
            frames.reverse();
            single(frames, true, PHASE_KEYFRAMES)
        }
        PrimitiveName::TurnLeft => single(crawl(&b, params, GaitKind::Turn)?, true, PHASE_KEYFRAMES),
        PrimitiveName::TurnRight => {
            let left = primitive_keyframes(PrimitiveName::TurnLeft, params, config)?;
            left.mirrored(PrimitiveName::TurnRight)
        }
        PrimitiveName::Wave => {
            let leg = LegId::FrontRight;
            let dt = settle / 2.0;
            let sway = sway_dx(config, leg);
            let mut t = stand;
            for x in t.iter_mut() {
                x.dx = sway;
            }
            let shifted = t;
            let mut frames = vec![b.frame(&stand, settle)?, b.frame(&shifted, dt)?];
            t[leg.index()].z += 2.0 * params.step_height_cm;
            frames.push(b.frame(&t, dt)?);
            for sweep in [WAVE_SWEEP_DEG, -WAVE_SWEEP_DEG, WAVE_SWEEP_DEG, 0.0] {
                t[leg.index()].dbeta = sweep;
                frames.push(b.frame(&t, dt)?);
            }
            frames.push(b.frame(&shifted, dt)?);
            frames.push(b.frame(&stand, dt)?);
            single(frames, false, 0)
        }
        PrimitiveName::Swing => {
            let amp = SWING_AMPLITUDE_CM.min(b.max_depth() - bp.stance_height_cm).max(0.0);
            let rocked = |sign: f64| {
                let mut t = stand;
                for leg in LegId::ALL {
                    let s = if leg.is_left() { sign } else { -sign };
                    t[leg.index()].z -= s * amp;
                    t[leg.index()].z_ref = t[leg.index()].z;
                }
                t
            };
            let dt = params.cycle_time_s / 4.0;
            let frames = vec![
                b.frame(&stand, dt)?,
                b.frame(&rocked(1.0), dt)?,
                b.frame(&stand, dt)?,
                b.frame(&rocked(-1.0), dt)?,
                b.frame(&stand, dt)?,
            ];
            single(frames, true, 0)
        }
        PrimitiveName::LookUp => {
            let span = foot_span(&b)?;
            let rise = bp.look_up_deg.to_radians().tan() * span;
            let front_drop = (rise / 2.0).min(b.max_depth() - bp.stance_height_cm).max(0.0);
            let rear_rise = (rise - front_drop).min(bp.stance_height_cm - MIN_CLEARANCE_CM).max(0.0);
            let mut t = stand;
            for leg in LegId::ALL {
                let x = &mut t[leg.index()];
                x.z = if leg.is_front() { x.z - front_drop } else { x.z + rear_rise };
                x.z_ref = x.z;
            }
            single(vec![b.frame(&stand, settle)?, b.frame(&t, settle)?], false, 0)
        }
        PrimitiveName::RaiseTwoLegs => {
            let hb = Builder::new(config, bp.balance_height_cm);
            let low = [hb.ground(); LEG_COUNT];
            let mut raised = low;
            for leg in [LegId::FrontRight, LegId::RearLeft] {
                raised[leg.index()].z += bp.balance_raise_cm;
                raised[leg.index()].z_ref = raised[leg.index()].z;
            }
            single(vec![hb.frame(&low, settle)?, hb.frame(&raised, settle)?], false, 0)
        }
    };
    Ok(fit_to_slew_rate(primitive, config.servo.slew_rate_dps))
}

/// Lengthens keyframes whose joint motion the servos cannot complete in
/// time, so every keyframe is actually reached before the next begins.
fn fit_to_slew_rate(mut p: MotionPrimitive, slew_dps: f64) -> MotionPrimitive {
    for i in 1..p.keyframes.len() {
        let travel = p.keyframes[i - 1]
            .poses
            .iter()
            .zip(&p.keyframes[i].poses)
            .flat_map(|(a, b)| a.angles().into_iter().zip(b.angles()).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max);
        let needed = travel / slew_dps * SLEW_MARGIN;
        let k = &mut p.keyframes[i];
        k.duration_s = k.duration_s.max(needed);
    }
    p
}

/// Longitudinal distance between front and rear neutral feet.
fn foot_span(b: &Builder) -> Result<f64, PrimitiveError> {
    let g = b.ground();
    let front = b.foot(LegId::FrontLeft, &g)?;
    let rear = b.foot(LegId::RearLeft, &g)?;
    Ok(front.x - rear.x)
}

/// Legs held up by the balance routine; the other two form the stance pair.
pub const BALANCE_RAISED: [LegId; 2] = [LegId::FrontRight, LegId::RearLeft];
pub const BALANCE_STANCE: [LegId; 2] = [LegId::FrontLeft, LegId::RearRight];
