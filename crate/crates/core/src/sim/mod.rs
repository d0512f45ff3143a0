//! Deterministic quasi-static world.
//!
//! Each step slews the joints, finds the support the feet rest on, orients
//! the body accordingly and re-anchors it in the plane by a least-squares fit
//! of the stance feet to where they stood on the previous step. Distances inside the
//! simulator are centimetres; obstacles and sensor ranges are metres.
//!
//! Support resolution: a triple of feet supports the body if no other foot
//! lies below its plane and the centre of gravity, projected along the plane
//! normal, falls inside the hull of the feet on that plane. When no triple
//! qualifies (for instance on two legs) the body tips about the line through
//! the two lowest feet. Tipping is overdamped: the lean of the centre of
//! gravity past the support line grows with time constant
//! [`Simulator::tip_time_constant_s`]. A foot that would pass below the
//! ground ends the tip.

pub mod sensors;
pub mod trace;

use nalgebra::{Rotation2, Rotation3, Unit, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{LegId, RobotConfig, LEG_COUNT};
use crate::kinematics::{leg_fk, leg_to_body, stability_margin, BodyState, LegPose, SupportPolygon};

pub use sensors::{raycast_range, sensor_pose, synthesize_imu, ImuNoise, SensorPose, CONE_OFFSETS_DEG};
pub use trace::{format_float, TraceRecord};

/// Feet within this height of the lowest one are in contact, cm.
pub const CONTACT_TOLERANCE_CM: f64 = 0.1;
/// A support plane further than this from the current up direction is not
/// settled onto directly; the body has to tip there.
const MAX_SETTLE_DEG: f64 = 3.0;
const MAX_TIP_STEP_RAD: f64 = 0.05;

/// Height the user lifts the robot by, cm, and the pitch it is held at.
pub const HELD_LIFT_CM: f64 = 5.0;
pub const HELD_PITCH_DEG: f64 = -35.0;
/// Time to reach the held pose, s.
pub const HELD_RAMP_S: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("obstacle {index} has non-positive extent")]
    DegenerateObstacle { index: usize },
    #[error("hold interval [{grab}, {release}] is not ordered or starts before 0")]
    BadHold { grab: f64, release: f64 },
}

/// Axis-aligned box in world coordinates, metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    /// Distance from a disc centre to the box footprint, metres.
    pub fn planar_distance(&self, p: &Vector2<f64>) -> f64 {
        let dx = (self.min[0] - p.x).max(0.0).max(p.x - self.max[0]);
        let dy = (self.min[1] - p.y).max(0.0).max(p.y - self.max[1]);
        dx.hypot(dy)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub obstacles: Vec<Aabb>,
    /// Intervals `[grab, release)` during which a user holds the robot.
    pub holds: Vec<(f64, f64)>,
    /// Radius of the body disc used for collision checks, metres.
    pub body_radius_m: f64,
}

pub const DEFAULT_BODY_RADIUS_M: f64 = 0.10;

impl World {
    pub fn new(obstacles: Vec<Aabb>, holds: Vec<(f64, f64)>) -> Result<Self, SimError> {
        for (index, o) in obstacles.iter().enumerate() {
            if (0..3).any(|i| !(o.max[i] > o.min[i])) {
                return Err(SimError::DegenerateObstacle { index });
            }
        }
        let mut last = 0.0;
        for &(grab, release) in &holds {
            if !(grab >= last && release > grab) {
                return Err(SimError::BadHold { grab, release });
            }
            last = release;
        }
        Ok(Self {
            obstacles,
            holds,
            body_radius_m: DEFAULT_BODY_RADIUS_M,
        })
    }

    pub fn empty() -> Self {
        Self {
            obstacles: Vec::new(),
            holds: Vec::new(),
            body_radius_m: DEFAULT_BODY_RADIUS_M,
        }
    }

    pub fn held_at(&self, t: f64) -> bool {
        self.holds.iter().any(|&(a, b)| t >= a && t < b)
    }

    /// Whether the body disc centred at `xy_m` overlaps any obstacle.
    pub fn collides(&self, xy_m: &Vector2<f64>) -> bool {
        self.obstacles
            .iter()
            .any(|o| o.planar_distance(xy_m) < self.body_radius_m)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub time: f64,
    pub body: BodyState,
    pub joints: [LegPose; LEG_COUNT],
    pub contacts: [bool; LEG_COUNT],
    pub held: bool,
    /// World-frame body velocity, cm/s.
    pub velocity: Vector3<f64>,
    /// World-frame feet, cm.
    pub feet: [Vector3<f64>; LEG_COUNT],
    /// Planar world position each stance foot touched down at, cm.
    anchors: [Option<Vector2<f64>>; LEG_COUNT],
    /// Body pose at the moment the user picked the robot up.
    held_from: Option<BodyState>,
}

impl SimState {
    pub fn contact_count(&self) -> usize {
        self.contacts.iter().filter(|c| **c).count()
    }

    /// Signed distance of the centre-of-gravity projection to the hull of the
    /// contact feet, cm. Negative infinity with fewer than three contacts.
    pub fn stability_margin(&self) -> f64 {
        let pts: Vec<Vector2<f64>> = LegId::ALL
            .iter()
            .filter(|l| self.contacts[l.index()])
            .map(|l| self.feet[l.index()].xy())
            .collect();
        stability_margin(&SupportPolygon::from_points(&pts), &Vector2::new(self.body.x, self.body.y))
    }
}

/// Up direction expressed in the body frame for a roll/pitch pair.
pub fn up_in_body(roll_deg: f64, pitch_deg: f64) -> Vector3<f64> {
    let (sr, cr) = roll_deg.to_radians().sin_cos();
    let (sp, cp) = pitch_deg.to_radians().sin_cos();
    Vector3::new(-sp, sr * cp, cr * cp)
}

/// Roll and pitch (degrees) whose up direction in the body frame is `u`.
pub fn roll_pitch_from_up(u: &Vector3<f64>) -> (f64, f64) {
    let pitch = (-u.x).clamp(-1.0, 1.0).asin().to_degrees();
    let roll = u.y.atan2(u.z).to_degrees();
    (roll, pitch)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Support {
    Plane,
    Tipping,
}

/// Quasi-static simulator for one robot.
#[derive(Debug, Clone)]
pub struct Simulator {
    config: RobotConfig,
    pub tip_time_constant_s: f64,
}

impl Simulator {
    pub fn new(config: &RobotConfig) -> Self {
        Self {
            config: config.clone(),
            tip_time_constant_s: 0.2,
        }
    }

    pub fn config(&self) -> &RobotConfig {
        &self.config
    }

    /// Feet in the body frame, cm.
    pub fn feet_in_body(&self, joints: &[LegPose; LEG_COUNT]) -> [Vector3<f64>; LEG_COUNT] {
        let c = &self.config;
        LegId::ALL.map(|leg| {
            let f = leg_fk(c.topology, c.attachment(leg), &joints[leg.index()], &c.links);
            leg_to_body(c.root(leg), &f)
        })
    }

    /// Places the robot at rest: feet resolved against the ground, body at
    /// the given planar pose and, if the feet allow it, the given tilt.
    pub fn initial_state(&self, body: BodyState, joints: [LegPose; LEG_COUNT]) -> SimState {
        let mut state = SimState {
            time: 0.0,
            body,
            joints,
            contacts: [false; LEG_COUNT],
            held: false,
            velocity: Vector3::zeros(),
            feet: [Vector3::zeros(); LEG_COUNT],
            anchors: [None; LEG_COUNT],
            held_from: None,
        };
        self.resolve(&mut state, 0.0);
        state
    }

    /// Advances the world by `dt` seconds towards the joint commands.
    pub fn step(&self, world: &World, state: &SimState, commands: &[LegPose; LEG_COUNT], dt: f64) -> SimState {
        let mut next = state.clone();
        next.time = state.time + dt;
        let max_move = self.config.servo.slew_rate_dps * dt;
        for i in 0..LEG_COUNT {
            next.joints[i] = slew(&state.joints[i], &commands[i], max_move);
        }
        next.held = world.held_at(next.time);

        if next.held {
            let base = *state.held_from.as_ref().unwrap_or(&state.body);
            next.held_from = Some(base);
            let mut body = state.body;
            let dz = HELD_LIFT_CM / HELD_RAMP_S * dt;
            body.z = (body.z + dz).min(base.z + HELD_LIFT_CM);
            let dp = HELD_PITCH_DEG.abs() / HELD_RAMP_S * dt;
            body.pitch = if body.pitch > HELD_PITCH_DEG {
                (body.pitch - dp).max(HELD_PITCH_DEG)
            } else {
                (body.pitch + dp).min(HELD_PITCH_DEG)
            };
            body.roll = 0.0;
            next.body = body;
            next.contacts = [false; LEG_COUNT];
            next.anchors = [None; LEG_COUNT];
            let p = self.feet_in_body(&next.joints);
            next.feet = p.map(|v| next.body.to_world(&v));
        } else {
            if state.held {
                next.body.roll = 0.0;
                next.body.pitch = 0.0;
                next.held_from = None;
            }
            self.resolve(&mut next, dt);
        }
        next.velocity = (next.body.position() - state.body.position()) / dt;
        next
    }

    /// Settles orientation, height and planar pose from the current joints.
    fn resolve(&self, state: &mut SimState, dt: f64) {
        let p = self.feet_in_body(&state.joints);
        let u = up_in_body(state.body.roll, state.body.pitch);
        let (up, _) = settle(&p, &u, dt, self.tip_time_constant_s);
        let (roll, pitch) = roll_pitch_from_up(&up);
        let heights: Vec<f64> = p.iter().map(|v| v.dot(&up)).collect();
        let low = heights.iter().copied().fold(f64::INFINITY, f64::min);
        let contacts: [bool; LEG_COUNT] = std::array::from_fn(|i| heights[i] - low <= CONTACT_TOLERANCE_CM);

        state.body.roll = roll;
        state.body.pitch = pitch;
        state.body.z = -low;

        // Feet relative to the body origin after tilt, before yaw.
        let tilt = Rotation3::from_euler_angles(roll.to_radians(), pitch.to_radians(), 0.0);
        let q: Vec<Vector2<f64>> = p.iter().map(|v| (tilt * v).xy()).collect();
        let matched: Vec<usize> = (0..LEG_COUNT)
            .filter(|&i| contacts[i] && state.contacts[i] && state.anchors[i].is_some())
            .collect();
        match matched.len() {
            0 => {}
            1 => {
                let i = matched[0];
                let r = Rotation2::new(state.body.yaw.to_radians());
                let t = state.anchors[i].unwrap() - r * q[i];
                state.body.x = t.x;
                state.body.y = t.y;
            }
            _ => {
                let n = matched.len() as f64;
                let qc = matched.iter().map(|&i| q[i]).sum::<Vector2<f64>>() / n;
                let ac = matched.iter().map(|&i| state.anchors[i].unwrap()).sum::<Vector2<f64>>() / n;
                let (mut sin, mut cos) = (0.0, 0.0);
                for &i in &matched {
                    let a = q[i] - qc;
                    let b = state.anchors[i].unwrap() - ac;
                    sin += a.x * b.y - a.y * b.x;
                    cos += a.dot(&b);
                }
                let yaw = if sin == 0.0 && cos == 0.0 {
                    state.body.yaw.to_radians()
                } else {
                    sin.atan2(cos)
                };
                let t = ac - Rotation2::new(yaw) * qc;
                state.body.yaw = yaw.to_degrees();
                state.body.x = t.x;
                state.body.y = t.y;
            }
        }
        state.body = state.body.normalized();

        let full = state.body.rotation();
        let origin = state.body.position();
        state.feet = p.map(|v| full * v + origin);
        // Stance feet that disagree with the fit slip to where it puts them.
        for i in 0..LEG_COUNT {
            state.anchors[i] = contacts[i].then(|| state.feet[i].xy());
        }
        state.contacts = contacts;
    }
}

fn slew(from: &LegPose, to: &LegPose, max_move: f64) -> LegPose {
    let step = |a: f64, b: f64| a + (b - a).clamp(-max_move, max_move);
    LegPose {
        rotator_deg: step(from.rotator_deg, to.rotator_deg),
        elevator_deg: match (from.elevator_deg, to.elevator_deg) {
            (Some(a), Some(b)) => Some(step(a, b)),
            (a, _) => a,
        },
        knee_deg: step(from.knee_deg, to.knee_deg),
    }
}

/// Orthonormal basis of the plane with unit normal `n`.
fn plane_basis(n: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let seed = if n.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let e1 = (seed - n * n.dot(&seed)).normalize();
    (e1, n.cross(&e1))
}

/// Support plane through three feet, normal oriented along `u`.
fn triple_normal(p: &[Vector3<f64>; LEG_COUNT], idx: [usize; 3], u: &Vector3<f64>) -> Option<Vector3<f64>> {
    let [i, j, k] = idx;
    let n = (p[j] - p[i]).cross(&(p[k] - p[i]));
    let len = n.norm();
    if len < 1e-12 {
        return None;
    }
    let n = n / len;
    Some(if n.dot(u) < 0.0 { -n } else { n })
}

/// Finds the up direction (body frame) the feet come to rest on.
fn settle(p: &[Vector3<f64>; LEG_COUNT], u: &Vector3<f64>, dt: f64, tau: f64) -> (Vector3<f64>, Support) {
    let mut best: Option<(f64, Vector3<f64>)> = None;
    for omit in 0..LEG_COUNT {
        let idx: Vec<usize> = (0..LEG_COUNT).filter(|&i| i != omit).collect();
        let Some(n) = triple_normal(p, [idx[0], idx[1], idx[2]], u) else {
            continue;
        };
        let score = n.dot(u);
        if score < MAX_SETTLE_DEG.to_radians().cos() {
            continue;
        }
        let base = p[idx[0]].dot(&n);
        if p[omit].dot(&n) - base < -1e-9 {
            continue;
        }
        let (e1, e2) = plane_basis(&n);
        let on_plane: Vec<Vector2<f64>> = p
            .iter()
            .filter(|v| v.dot(&n) - base <= CONTACT_TOLERANCE_CM)
            .map(|v| Vector2::new(v.dot(&e1), v.dot(&e2)))
            .collect();
        let margin = stability_margin(&SupportPolygon::from_points(&on_plane), &Vector2::zeros());
        if margin < 0.0 {
            continue;
        }
        if best.is_none_or(|(s, _)| score > s) {
            best = Some((score, n));
        }
    }
    if let Some((_, n)) = best {
        return (n, Support::Plane);
    }
    (tip(p, u, dt, tau), Support::Tipping)
}

/// One overdamped tipping step about the line through the two lowest feet.
fn tip(p: &[Vector3<f64>; LEG_COUNT], u: &Vector3<f64>, dt: f64, tau: f64) -> Vector3<f64> {
    let mut order: [usize; LEG_COUNT] = std::array::from_fn(|i| i);
    order.sort_by(|&a, &b| p[a].dot(u).total_cmp(&p[b].dot(u)).then(a.cmp(&b)));
    let (a, b) = (order[0], order[1]);
    let axis = p[b] - p[a];
    if axis.norm() < 1e-12 {
        return *u;
    }
    let e = axis.normalize();
    // Level the support line, then lean about it.
    let u1 = (u - e * u.dot(&e)).normalize();
    let w = -p[a] - e * (-p[a]).dot(&e);
    let lever = w.norm();
    if lever < 1e-12 || dt == 0.0 {
        return u1;
    }
    let height = w.dot(&u1);
    let lean = (w - u1 * height).norm() / lever;
    let torque_side = w.dot(&e.cross(&u1));
    let angle = (lean * dt / tau).min(MAX_TIP_STEP_RAD) * torque_side.signum();
    let rot = Rotation3::from_axis_angle(&Unit::new_normalize(e), -angle);
    let u2 = rot * u1;

    // A third foot reaching the ground ends the tip on that foot's plane.
    let base = p[a].dot(&u2);
    let mut landing: Option<(f64, Vector3<f64>)> = None;
    for &m in &order[2..] {
        if p[m].dot(&u2) - base < 0.0 {
            if let Some(n) = triple_normal(p, [a, b, m], &u1) {
                let score = n.dot(&u1);
                if landing.is_none_or(|(s, _)| score > s) {
                    landing = Some((score, n));
                }
            }
        }
    }
    landing.map(|(_, n)| n).unwrap_or(u2)
}
