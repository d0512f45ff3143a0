//! Synthetic ultrasonic and inertial readings.

use nalgebra::{Rotation3, Vector3};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::hal::{ImuSample, RangeReading, MAX_RANGE_M};
use crate::kinematics::{normalize_deg, BodyState};

use super::{Aabb, SimState, World};

/// Ray directions approximating the sensor's ±15° cone, degrees from the
/// boresight about the world vertical.
pub const CONE_OFFSETS_DEG: [f64; 5] = [-15.0, -10.0, 0.0, 10.0, 15.0];

/// Distance of the ultrasonic sensor ahead of the body origin, metres.
pub const SENSOR_FORWARD_M: f64 = 0.08;

/// Sensor origin and boresight in world coordinates, metres.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorPose {
    pub origin: Vector3<f64>,
    pub direction: Vector3<f64>,
}

/// Pose of a forward-looking sensor mounted on the body.
pub fn sensor_pose(body: &BodyState) -> SensorPose {
    let r = body.rotation();
    SensorPose {
        origin: body.position() / 100.0 + r * Vector3::new(SENSOR_FORWARD_M, 0.0, 0.0),
        direction: r * Vector3::x(),
    }
}

/// Entry distance of a ray into a box (slab method); `None` when missed.
fn ray_box(origin: &Vector3<f64>, dir: &Vector3<f64>, b: &Aabb) -> Option<f64> {
    let (mut t0, mut t1) = (0.0f64, f64::INFINITY);
    for i in 0..3 {
        if dir[i].abs() < 1e-15 {
            if origin[i] < b.min[i] || origin[i] > b.max[i] {
                return None;
            }
            continue;
        }
        let a = (b.min[i] - origin[i]) / dir[i];
        let c = (b.max[i] - origin[i]) / dir[i];
        t0 = t0.max(a.min(c));
        t1 = t1.min(a.max(c));
        if t0 > t1 {
            return None;
        }
    }
    Some(t0)
}

/// Nearest obstacle along the sensor cone.
pub fn raycast_range(world: &World, pose: &SensorPose) -> RangeReading {
    let nearest = CONE_OFFSETS_DEG
        .iter()
        .filter_map(|off| {
            let dir = Rotation3::from_axis_angle(&Vector3::z_axis(), off.to_radians()) * pose.direction;
            world
                .obstacles
                .iter()
                .filter_map(|b| ray_box(&pose.origin, &dir, b))
                .min_by(f64::total_cmp)
        })
        .min_by(f64::total_cmp);
    match nearest {
        Some(d) if d <= MAX_RANGE_M => RangeReading::Distance(d),
        _ => RangeReading::Timeout,
    }
}

/// Standard deviations of additive Gaussian IMU noise.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImuNoise {
    #[serde(default)]
    pub accel_std_mps2: f64,
    #[serde(default)]
    pub gyro_std_dps: f64,
}

/// Body-frame specific force and rates from two consecutive states.
///
/// Specific force is the inverse body rotation applied to world
/// acceleration plus `g` upward: a level body at rest reads `(0, 0, +g)`, a
/// body rolled +90° reads `(0, +g, 0)`. Rates convert finite-difference
/// Euler-angle rates to body rates. Noise, if given, is zero-mean Gaussian.
pub fn synthesize_imu(
    state: &SimState,
    previous: &SimState,
    dt: f64,
    gravity: f64,
    noise: Option<(&ImuNoise, &mut dyn rand::RngCore)>,
) -> ImuSample {
    let accel_world = (state.velocity - previous.velocity) / dt / 100.0;
    let r = state.body.rotation();
    let f = r.inverse() * (accel_world + Vector3::new(0.0, 0.0, gravity));

    let roll_rate = (state.body.roll - previous.body.roll) / dt;
    let pitch_rate = (state.body.pitch - previous.body.pitch) / dt;
    let yaw_rate = normalize_deg(state.body.yaw - previous.body.yaw) / dt;
    let (sr, cr) = state.body.roll.to_radians().sin_cos();
    let (sp, cp) = state.body.pitch.to_radians().sin_cos();
    let mut sample = ImuSample {
        accel: [f.x, f.y, f.z],
        gyro: [
            roll_rate - sp * yaw_rate,
            cr * pitch_rate + sr * cp * yaw_rate,
            -sr * pitch_rate + cr * cp * yaw_rate,
        ],
    };
    if let Some((n, rng)) = noise {
        add_noise(&mut sample, n, rng);
    }
    sample
}

fn add_noise(sample: &mut ImuSample, noise: &ImuNoise, rng: &mut dyn rand::RngCore) {
    let mut perturb = |v: &mut [f64; 3], std: f64| {
        if std > 0.0 {
            let d = Normal::new(0.0, std).expect("finite positive std");
            for x in v.iter_mut() {
                *x += d.sample(rng);
            }
        }
    };
    perturb(&mut sample.accel, noise.accel_std_mps2);
    perturb(&mut sample.gyro, noise.gyro_std_dps);
}
