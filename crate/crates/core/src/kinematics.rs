//! Leg forward/inverse kinematics and support-polygon stability.
//!
//! Angles are degrees everywhere outside trigonometric evaluation. The leg-root
//! frame has x along the neutral leg axis, z up. Pitch joints are positive
//! upward; the knee angle is relative to the proximal link.

use nalgebra::{Rotation3, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{AttachmentConfig, LegRoot, LegTopology, LinkLengths};

/// Tolerance for a two-joint target to count as lying on the reachable surface.
pub const SURFACE_TOLERANCE_CM: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KinematicsError {
    #[error("target out of reach: planar distance {distance:.6} cm not in [{min:.6}, {max:.6}]")]
    Unreachable { distance: f64, min: f64, max: f64 },
    #[error("{joint} angle {angle:.3}° outside ±{limit}°")]
    OutOfRange {
        joint: &'static str,
        angle: f64,
        limit: f64,
    },
    #[error("pose does not match topology: {0}")]
    TopologyMismatch(&'static str),
}

/// Commanded joint angles of one leg, degrees about the servo centre.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LegPose {
    pub rotator_deg: f64,
    pub elevator_deg: Option<f64>,
    pub knee_deg: f64,
}

impl LegPose {
    pub fn zero(topology: LegTopology) -> Self {
        Self {
            rotator_deg: 0.0,
            elevator_deg: matches!(topology, LegTopology::ThreeJoint).then_some(0.0),
            knee_deg: 0.0,
        }
    }

    /// Joint angles proximal to distal.
    pub fn angles(&self) -> Vec<f64> {
        let mut out = vec![self.rotator_deg];
        out.extend(self.elevator_deg);
        out.push(self.knee_deg);
        out
    }

    pub fn from_angles(topology: LegTopology, angles: &[f64]) -> Self {
        match topology {
            LegTopology::TwoJoint => Self {
                rotator_deg: angles[0],
                elevator_deg: None,
                knee_deg: angles[1],
            },
            LegTopology::ThreeJoint => Self {
                rotator_deg: angles[0],
                elevator_deg: Some(angles[1]),
                knee_deg: angles[2],
            },
        }
    }

    pub fn validate(&self, topology: LegTopology, limit_deg: f64) -> Result<(), KinematicsError> {
        match (topology, self.elevator_deg) {
            (LegTopology::TwoJoint, Some(_)) => {
                return Err(KinematicsError::TopologyMismatch("elevator on a two-joint leg"))
            }
            (LegTopology::ThreeJoint, None) => {
                return Err(KinematicsError::TopologyMismatch("missing elevator angle"))
            }
            _ => {}
        }
        check_range("rotator", self.rotator_deg, limit_deg)?;
        if let Some(e) = self.elevator_deg {
            check_range("elevator", e, limit_deg)?;
        }
        check_range("knee", self.knee_deg, limit_deg)
    }

    /// Linear interpolation between two poses of the same topology.
    pub fn lerp(&self, other: &LegPose, t: f64) -> LegPose {
        let mix = |a: f64, b: f64| a + (b - a) * t;
        LegPose {
            rotator_deg: mix(self.rotator_deg, other.rotator_deg),
            elevator_deg: self.elevator_deg.zip(other.elevator_deg).map(|(a, b)| mix(a, b)),
            knee_deg: mix(self.knee_deg, other.knee_deg),
        }
    }
}

fn check_range(joint: &'static str, angle: f64, limit: f64) -> Result<(), KinematicsError> {
    if angle.abs() <= limit + 1e-9 {
        Ok(())
    } else {
        Err(KinematicsError::OutOfRange { joint, angle, limit })
    }
}

/// Horn offsets added to commanded pitch angles.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct JointOffsets {
    pub elevator_deg: f64,
    pub knee_deg: f64,
}

impl JointOffsets {
    pub fn from_attachment(a: &AttachmentConfig) -> Self {
        Self {
            elevator_deg: a.elevator_offset_deg(),
            knee_deg: a.knee_offset_deg(),
        }
    }
}

/// Link angles about the neutral axes: commanded angles plus horn offsets.
pub fn physical_pose(attachment: &AttachmentConfig, pose: &LegPose) -> LegPose {
    let o = JointOffsets::from_attachment(attachment);
    LegPose {
        rotator_deg: pose.rotator_deg,
        elevator_deg: pose.elevator_deg.map(|e| e + o.elevator_deg),
        knee_deg: pose.knee_deg + o.knee_deg,
    }
}

/// Foot position in the leg-root frame, cm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FootPosition {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl FootPosition {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn from_vector(v: Vector3<f64>) -> Self {
        Self::new(v.x, v.y, v.z)
    }

    pub fn distance(&self, other: &FootPosition) -> f64 {
        (self.to_vector() - other.to_vector()).norm()
    }
}

pub fn leg_fk(
    topology: LegTopology,
    attachment: &AttachmentConfig,
    pose: &LegPose,
    lengths: &LinkLengths,
) -> FootPosition {
    let p = physical_pose(attachment, pose);
    let yaw = p.rotator_deg.to_radians();
    let proximal = match topology {
        LegTopology::TwoJoint => 0.0,
        LegTopology::ThreeJoint => p.elevator_deg.unwrap_or(0.0).to_radians(),
    };
    let distal = proximal + p.knee_deg.to_radians();
    let (l1, l2) = (lengths.elevator_to_knee_cm, lengths.knee_to_foot_cm);
    let rho = l1 * proximal.cos() + l2 * distal.cos();
    let z = l1 * proximal.sin() + l2 * distal.sin();
    FootPosition::new(rho * yaw.cos(), rho * yaw.sin(), z)
}

/// Closed-form inverse kinematics, knee-down branch.
///
/// Two-joint legs only reach a surface (the knee circle swept by the rotator);
/// targets off that surface by more than [`SURFACE_TOLERANCE_CM`] are
/// unreachable. Three-joint legs solve the planar elevator/knee pair by the
/// law of cosines.
pub fn leg_ik(
    topology: LegTopology,
    attachment: &AttachmentConfig,
    target: &FootPosition,
    lengths: &LinkLengths,
) -> Result<LegPose, KinematicsError> {
    let (l1, l2) = (lengths.elevator_to_knee_cm, lengths.knee_to_foot_cm);
    let rho = target.x.hypot(target.y);
    let yaw = if rho > 0.0 { target.y.atan2(target.x) } else { 0.0 };
    let offsets = JointOffsets::from_attachment(attachment);
    let limit = 90.0;

    let (elevator, knee) = match topology {
        LegTopology::TwoJoint => {
            let dr = rho - l1;
            let distance = dr.hypot(target.z);
            if (distance - l2).abs() > SURFACE_TOLERANCE_CM {
                return Err(KinematicsError::Unreachable {
                    distance,
                    min: l2,
                    max: l2,
                });
            }
            (None, target.z.atan2(dr).to_degrees())
        }
        LegTopology::ThreeJoint => {
            let distance = rho.hypot(target.z);
            let (min, max) = ((l1 - l2).abs(), l1 + l2);
            if distance > max + SURFACE_TOLERANCE_CM || distance < min - SURFACE_TOLERANCE_CM {
                return Err(KinematicsError::Unreachable { distance, min, max });
            }
            let cos_knee = ((distance * distance - l1 * l1 - l2 * l2) / (2.0 * l1 * l2)).clamp(-1.0, 1.0);
            let knee = -cos_knee.acos();
            let elevator = target.z.atan2(rho) - (l2 * knee.sin()).atan2(l1 + l2 * knee.cos());
            (Some(elevator.to_degrees()), knee.to_degrees())
        }
    };

    let pose = LegPose {
        rotator_deg: yaw.to_degrees(),
        elevator_deg: elevator.map(|e| e - offsets.elevator_deg),
        knee_deg: knee - offsets.knee_deg,
    };
    check_range("rotator", pose.rotator_deg, limit)?;
    if let Some(e) = pose.elevator_deg {
        check_range("elevator", e, limit)?;
    }
    check_range("knee", pose.knee_deg, limit)?;
    Ok(pose)
}

/// Leg-root frame to body frame.
pub fn leg_to_body(root: &LegRoot, foot: &FootPosition) -> Vector3<f64> {
    let (s, c) = root.mount_yaw_deg.to_radians().sin_cos();
    Vector3::new(
        root.x_cm + c * foot.x - s * foot.y,
        root.y_cm + s * foot.x + c * foot.y,
        foot.z,
    )
}

/// Body frame to leg-root frame.
pub fn body_to_leg(root: &LegRoot, p: &Vector3<f64>) -> FootPosition {
    let (s, c) = root.mount_yaw_deg.to_radians().sin_cos();
    let dx = p.x - root.x_cm;
    let dy = p.y - root.y_cm;
    FootPosition::new(c * dx + s * dy, -s * dx + c * dy, p.z)
}

/// Wraps an angle in degrees to (-180, 180].
pub fn normalize_deg(angle: f64) -> f64 {
    let mut a = angle % 360.0;
    if a <= -180.0 {
        a += 360.0;
    } else if a > 180.0 {
        a -= 360.0;
    }
    a
}

/// Body pose in the world frame: position in cm, Z-Y-X Euler angles in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BodyState {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

impl BodyState {
    pub fn normalized(mut self) -> Self {
        self.roll = normalize_deg(self.roll);
        self.pitch = normalize_deg(self.pitch);
        self.yaw = normalize_deg(self.yaw);
        self
    }

    pub fn rotation(&self) -> Rotation3<f64> {
        Rotation3::from_euler_angles(
            self.roll.to_radians(),
            self.pitch.to_radians(),
            self.yaw.to_radians(),
        )
    }

    pub fn set_rotation(&mut self, r: &Rotation3<f64>) {
        let (roll, pitch, yaw) = r.euler_angles();
        self.roll = normalize_deg(roll.to_degrees());
        self.pitch = normalize_deg(pitch.to_degrees());
        self.yaw = normalize_deg(yaw.to_degrees());
    }

    pub fn position(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn to_world(&self, p_body: &Vector3<f64>) -> Vector3<f64> {
        self.rotation() * p_body + self.position()
    }

    /// Angle between the body z axis and the world vertical, degrees.
    pub fn tilt_deg(&self) -> f64 {
        let up = self.rotation() * Vector3::z();
        up.z.clamp(-1.0, 1.0).acos().to_degrees()
    }
}

/// Ground-contact points in convex-hull order (counter-clockwise).
#[derive(Debug, Clone, PartialEq)]
pub struct SupportPolygon {
    points: Vec<Vector2<f64>>,
}

impl SupportPolygon {
    /// Builds the convex hull of the contact points (monotone chain).
    pub fn from_points(points: &[Vector2<f64>]) -> Self {
        let mut pts: Vec<Vector2<f64>> = points.to_vec();
        pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
        pts.dedup_by(|a, b| (*a - *b).norm() < 1e-12);
        if pts.len() < 3 {
            return Self { points: pts };
        }
        let cross = |o: &Vector2<f64>, a: &Vector2<f64>, b: &Vector2<f64>| {
            (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
        };
        let mut hull: Vec<Vector2<f64>> = Vec::with_capacity(pts.len() * 2);
        let sweep = |hull: &mut Vec<Vector2<f64>>, p: &Vector2<f64>, floor: usize| {
            while hull.len() >= floor + 2
                && cross(&hull[hull.len() - 2], &hull[hull.len() - 1], p) <= 0.0
            {
                hull.pop();
            }
            hull.push(*p);
        };
        for p in &pts {
            sweep(&mut hull, p, 0);
        }
        let lower = hull.len() - 1;
        for p in pts.iter().rev().skip(1) {
            sweep(&mut hull, p, lower);
        }
        hull.pop();
        Self { points: hull }
    }

    pub fn points(&self) -> &[Vector2<f64>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn segment_distance(p: &Vector2<f64>, a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let t = if len2 > 0.0 {
        ((p - a).dot(&ab) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (p - (a + ab * t)).norm()
}

/// Signed distance from the centre-of-gravity projection to the support
/// polygon boundary: positive inside, negative outside. Polygons with fewer
/// than three vertices cannot support the body statically and yield
/// `f64::NEG_INFINITY`.
pub fn stability_margin(polygon: &SupportPolygon, cog_xy: &Vector2<f64>) -> f64 {
    let pts = polygon.points();
    if pts.len() < 3 {
        return f64::NEG_INFINITY;
    }
    let n = pts.len();
    let mut inside = true;
    let mut nearest = f64::INFINITY;
    for i in 0..n {
        let a = &pts[i];
        let b = &pts[(i + 1) % n];
        let edge = b - a;
        let rel = cog_xy - a;
        if edge.x * rel.y - edge.y * rel.x < 0.0 {
            inside = false;
        }
        nearest = nearest.min(segment_distance(cog_xy, a, b));
    }
    if inside {
        nearest
    } else {
        -nearest
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lengths() -> LinkLengths {
        LinkLengths {
            cog_to_elevator_cm: 10.0,
            elevator_to_knee_cm: 5.3,
            knee_to_foot_cm: 4.7,
        }
    }

    fn close(a: &FootPosition, b: &FootPosition, tol: f64) -> bool {
        a.distance(b) < tol
    }

    #[test]
    fn fk_examples() {
        let n = AttachmentConfig::neutral();
        let t = LegTopology::TwoJoint;
        let fk = |r: f64, k: f64| {
            leg_fk(t, &n, &LegPose { rotator_deg: r, elevator_deg: None, knee_deg: k }, &lengths())
        };
        assert!(close(&fk(0.0, 0.0), &FootPosition::new(10.0, 0.0, 0.0), 1e-12));
        assert!(close(&fk(90.0, 0.0), &FootPosition::new(0.0, 10.0, 0.0), 1e-12));
        assert!(close(&fk(0.0, -90.0), &FootPosition::new(5.3, 0.0, -4.7), 1e-12));
    }

    #[test]
    fn ik_examples() {
        let n = AttachmentConfig::neutral();
        let t = LegTopology::TwoJoint;
        let pose = leg_ik(t, &n, &FootPosition::new(10.0, 0.0, 0.0), &lengths()).unwrap();
        assert!(pose.rotator_deg.abs() < 1e-12 && pose.knee_deg.abs() < 1e-12);
        assert!(matches!(
            leg_ik(t, &n, &FootPosition::new(10.1, 0.0, 0.0), &lengths()),
            Err(KinematicsError::Unreachable { .. })
        ));
        let pose = leg_ik(t, &n, &FootPosition::new(5.3, 0.0, -4.7), &lengths()).unwrap();
        assert!(pose.rotator_deg.abs() < 1e-12);
        assert!((pose.knee_deg + 90.0).abs() < 1e-9);

        let t3 = LegTopology::ThreeJoint;
        let pose = leg_ik(t3, &n, &FootPosition::new(10.0, 0.0, 0.0), &lengths()).unwrap();
        assert!(pose.elevator_deg.unwrap().abs() < 1e-6 && pose.knee_deg.abs() < 1e-6);
        assert!(matches!(
            leg_ik(t3, &n, &FootPosition::new(10.1, 0.0, 0.0), &lengths()),
            Err(KinematicsError::Unreachable { .. })
        ));
    }

    #[test]
    fn three_joint_ik_picks_knee_down() {
        let n = AttachmentConfig::neutral();
        let target = FootPosition::new(8.0, 1.0, -4.0);
        let pose = leg_ik(LegTopology::ThreeJoint, &n, &target, &lengths()).unwrap();
        assert!(pose.knee_deg < 0.0);
        assert!(pose.elevator_deg.unwrap() > -26.6);
        let back = leg_fk(LegTopology::ThreeJoint, &n, &pose, &lengths());
        assert!(close(&back, &target, 1e-9));
    }

    #[test]
    fn ik_out_of_range_after_offsets() {
        let a = AttachmentConfig {
            elevator: None,
            knee: crate::config::MountOption::new(4),
        };
        // Physical knee -90 needs a command of -180 with a +90 horn.
        let r = leg_ik(LegTopology::TwoJoint, &a, &FootPosition::new(5.3, 0.0, -4.7), &lengths());
        assert!(matches!(r, Err(KinematicsError::OutOfRange { joint: "knee", .. })));
    }

    #[test]
    fn attachment_offset_matches_commanded_change() {
        let a = AttachmentConfig {
            elevator: crate::config::MountOption::new(3),
            knee: crate::config::MountOption::new(2),
        };
        let pose = LegPose { rotator_deg: 10.0, elevator_deg: Some(-20.0), knee_deg: 5.0 };
        let shifted = LegPose { rotator_deg: 10.0, elevator_deg: Some(25.0), knee_deg: -40.0 };
        let t = LegTopology::ThreeJoint;
        let with_offset = leg_fk(t, &a, &pose, &lengths());
        let commanded = leg_fk(t, &AttachmentConfig::neutral(), &shifted, &lengths());
        assert!(close(&with_offset, &commanded, 1e-12));
    }

    #[test]
    fn leg_body_frames_invert() {
        let root = LegRoot { x_cm: 7.0, y_cm: -7.0, mount_yaw_deg: -45.0 };
        let f = FootPosition::new(7.5, 1.0, -4.0);
        let back = body_to_leg(&root, &leg_to_body(&root, &f));
        assert!(close(&f, &back, 1e-12));
    }

    #[test]
    fn margin_examples() {
        let square = SupportPolygon::from_points(&[
            Vector2::new(5.0, 5.0),
            Vector2::new(-5.0, 5.0),
            Vector2::new(-5.0, -5.0),
            Vector2::new(5.0, -5.0),
        ]);
        assert!((stability_margin(&square, &Vector2::new(0.0, 0.0)) - 5.0).abs() < 1e-12);
        assert!((stability_margin(&square, &Vector2::new(6.0, 0.0)) + 1.0).abs() < 1e-12);
        assert_eq!(stability_margin(&square, &Vector2::new(5.0, 0.0)), 0.0);

        let tri = SupportPolygon::from_points(&[
            Vector2::new(0.0, 0.0),
            Vector2::new(10.0, 0.0),
            Vector2::new(0.0, 10.0),
        ]);
        assert!((stability_margin(&tri, &Vector2::new(2.0, 2.0)) - 2.0).abs() < 1e-12);

        let line = SupportPolygon::from_points(&[Vector2::new(0.0, 0.0), Vector2::new(1.0, 1.0)]);
        assert_eq!(stability_margin(&line, &Vector2::new(0.5, 0.5)), f64::NEG_INFINITY);
    }

    #[test]
    fn hull_drops_interior_points() {
        let poly = SupportPolygon::from_points(&[
            Vector2::new(0.0, 0.0),
            Vector2::new(4.0, 0.0),
            Vector2::new(1.0, 1.0),
            Vector2::new(4.0, 4.0),
            Vector2::new(0.0, 4.0),
        ]);
        assert_eq!(poly.len(), 4);
    }

    #[test]
    fn normalize_wraps_into_half_open_interval() {
        assert_eq!(normalize_deg(180.0), 180.0);
        assert_eq!(normalize_deg(-180.0), 180.0);
        assert_eq!(normalize_deg(190.0), -170.0);
        assert_eq!(normalize_deg(-370.0), -10.0);
    }

    #[test]
    fn tilt_of_rolled_body() {
        let b = BodyState { roll: 10.0, ..Default::default() };
        assert!((b.tilt_deg() - 10.0).abs() < 1e-9);
    }
}
