//! Static torque feasibility and electronics power budget.
//!
//! Masses are in grams, lengths in centimetres and torques in N·cm. Converting
//! between a mass moment (g·cm) and a torque always goes through the gravity
//! value carried by the caller.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{LegTopology, RobotConfig};
use crate::kinematics::LegPose;

/// Default gravity, m/s².
pub const STANDARD_GRAVITY: f64 = 9.81;

/// Limit published for the reference build. It depends on moment arms that are
/// only given graphically, so it is reported next to the computed limit rather
/// than reproduced.
pub const PUBLISHED_BODY_WEIGHT_LIMIT_G: f64 = 850.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FeasibilityError {
    #[error("degenerate geometry: d1 + d2 must be positive (got {0})")]
    DegenerateGeometry(f64),
    #[error("load must be positive, got {0} W")]
    NonPositiveLoad(f64),
    #[error("invalid {field}: {value}")]
    InvalidInput { field: &'static str, value: f64 },
}

/// Converts N·cm of torque into the g·cm mass moment it can hold under `g`.
pub fn torque_to_mass_moment(torque_ncm: f64, g: f64) -> f64 {
    torque_ncm / g * 1000.0
}

/// Converts a g·cm mass moment into N·cm of torque under `g`.
pub fn mass_moment_to_torque(moment_gcm: f64, g: f64) -> f64 {
    moment_gcm * g / 1000.0
}

/// Moment arms of the worst-case (legs extended) equilibrium, in cm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TorqueArms {
    pub d1_cm: f64,
    pub d2_cm: f64,
    pub d3_cm: f64,
    pub d4_cm: f64,
}

impl Default for TorqueArms {
    /// Arms following the stated link lengths with link masses at mid-link.
    fn default() -> Self {
        Self {
            d1_cm: 15.3,
            d2_cm: 4.7,
            d3_cm: 2.65,
            d4_cm: 2.35,
        }
    }
}

/// Inputs of the single-pivot equilibrium with both servos at nominal torque.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TorqueScenario {
    /// Elevator servo torque, N·cm.
    pub gamma2: f64,
    /// Knee servo torque, N·cm.
    pub gamma3: f64,
    /// Link weights, grams.
    pub w2: f64,
    pub w3: f64,
    pub arms: TorqueArms,
    /// Gravity, m/s².
    pub g: f64,
}

impl TorqueScenario {
    /// Scenario for a build: both pitch servos at nominal torque, link masses
    /// and arms from the configuration.
    pub fn from_config(config: &RobotConfig) -> Self {
        let (w2, w3) = leg_link_masses(config);
        Self {
            gamma2: config.servo.nominal_torque_ncm,
            gamma3: config.servo.nominal_torque_ncm,
            w2,
            w3,
            arms: config.torque_arms,
            g: config.gravity_mps2,
        }
    }

    fn validate(&self) -> Result<(), FeasibilityError> {
        let checks = [
            ("gamma2", self.gamma2),
            ("gamma3", self.gamma3),
            ("w2", self.w2),
            ("w3", self.w3),
            ("d1", self.arms.d1_cm),
            ("d2", self.arms.d2_cm),
            ("d3", self.arms.d3_cm),
            ("d4", self.arms.d4_cm),
        ];
        for (field, value) in checks {
            if !(value >= 0.0) {
                return Err(FeasibilityError::InvalidInput { field, value });
            }
        }
        if !(self.g > 0.0) {
            return Err(FeasibilityError::InvalidInput {
                field: "g",
                value: self.g,
            });
        }
        Ok(())
    }

    /// Right-hand side of the equilibrium for a given body weight, in g·cm.
    pub fn equilibrium_rhs(&self, body_weight: f64) -> f64 {
        let a = &self.arms;
        let r = foot_reaction(body_weight, self.w2, self.w3);
        body_weight / 4.0 * a.d1_cm + self.w2 * a.d3_cm - self.w3 * a.d4_cm + r * a.d2_cm
    }

    /// Left-hand side: available servo torque as a mass moment, g·cm.
    pub fn equilibrium_lhs(&self) -> f64 {
        torque_to_mass_moment(self.gamma2 + self.gamma3, self.g)
    }
}

/// Vertical reaction at one foot when the body weight is shared by four legs.
pub fn foot_reaction(body_weight: f64, w2: f64, w3: f64) -> f64 {
    body_weight / 4.0 + w2 + w3
}

/// Largest body weight (grams) the pitch servos can hold in the scenario.
///
/// A negative value is returned unchanged: the servos cannot even hold the
/// legs themselves in that geometry.
pub fn max_body_weight(s: &TorqueScenario) -> Result<f64, FeasibilityError> {
    s.validate()?;
    let a = &s.arms;
    let span = a.d1_cm + a.d2_cm;
    if span <= 0.0 {
        return Err(FeasibilityError::DegenerateGeometry(span));
    }
    let available = s.equilibrium_lhs();
    let legs = s.w2 * a.d3_cm - s.w3 * a.d4_cm + (s.w2 + s.w3) * a.d2_cm;
    Ok(4.0 * (available - legs) / span)
}

/// Rail-level electrical budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerBudget {
    pub rail_voltage_v: f64,
    pub controller_peak_current_a: f64,
    /// Per-servo current, amps.
    pub servo_current_a: f64,
    pub servo_count: u32,
    pub converter_count: u32,
    pub converter_max_power_w: f64,
}

impl PowerBudget {
    pub fn converter_capacity_w(&self) -> f64 {
        self.converter_count as f64 * self.converter_max_power_w
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PeakPower {
    pub watts: f64,
    pub capacity_w: f64,
    pub headroom: bool,
}

pub fn peak_power(b: &PowerBudget) -> PeakPower {
    let current = b.controller_peak_current_a + b.servo_count as f64 * b.servo_current_a;
    let watts = b.rail_voltage_v * current;
    let capacity_w = b.converter_capacity_w();
    PeakPower {
        watts,
        capacity_w,
        headroom: watts <= capacity_w,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatteryPack {
    pub cell_count_parallel: u32,
    pub cell_capacity_mah: f64,
    pub average_voltage_v: f64,
    /// Converter efficiency in (0, 1].
    pub converter_efficiency: f64,
}

impl BatteryPack {
    pub fn total_capacity_mah(&self) -> f64 {
        self.cell_count_parallel as f64 * self.cell_capacity_mah
    }
}

/// Runtime under a constant load, in minutes.
pub fn autonomy_minutes(pack: &BatteryPack, load_w: f64) -> Result<f64, FeasibilityError> {
    if !(load_w > 0.0) {
        return Err(FeasibilityError::NonPositiveLoad(load_w));
    }
    if !(pack.converter_efficiency > 0.0 && pack.converter_efficiency <= 1.0) {
        return Err(FeasibilityError::InvalidInput {
            field: "converter_efficiency",
            value: pack.converter_efficiency,
        });
    }
    let battery_current_a = load_w / (pack.average_voltage_v * pack.converter_efficiency);
    let capacity_ah = pack.total_capacity_mah() / 1000.0;
    Ok(60.0 * capacity_ah / battery_current_a)
}

/// Gravity torque on each pitch joint of one supporting leg.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JointTorques {
    /// Elevator torque, N·cm; `None` for two-joint legs.
    pub elevator_ncm: Option<f64>,
    pub knee_ncm: f64,
    pub nominal_ncm: f64,
    pub feasible: bool,
}

impl JointTorques {
    pub fn max_ncm(&self) -> f64 {
        self.elevator_ncm.unwrap_or(0.0).max(self.knee_ncm)
    }
}

/// Horizontal moment arms (cm) of the loads acting on one leg, measured from
/// each pitch joint.
#[derive(Debug, Clone, Copy, PartialEq)]
struct LegArms {
    /// From elevator to: foot, link2 centre, link3 centre.
    elevator: Option<(f64, f64, f64)>,
    /// From knee to: foot, link3 centre.
    knee: (f64, f64),
}

fn leg_arms(config: &RobotConfig, pose: &LegPose) -> LegArms {
    let l1 = config.links.elevator_to_knee_cm;
    let l2 = config.links.knee_to_foot_cm;
    let elevator = pose.elevator_deg.unwrap_or(0.0);
    let knee = pose.knee_deg;
    let a1 = match config.topology {
        LegTopology::TwoJoint => 0.0,
        LegTopology::ThreeJoint => elevator.to_radians(),
    };
    let a2 = a1 + knee.to_radians();
    let h_knee = l1 * a1.cos();
    let h_foot = h_knee + l2 * a2.cos();
    let h_link2 = 0.5 * l1 * a1.cos();
    let h_link3 = h_knee + 0.5 * l2 * a2.cos();
    let elevator = match config.topology {
        LegTopology::TwoJoint => None,
        LegTopology::ThreeJoint => Some((h_foot.abs(), h_link2.abs(), h_link3.abs())),
    };
    LegArms {
        elevator,
        knee: ((h_foot - h_knee).abs(), (h_link3 - h_knee).abs()),
    }
}

/// Static torque at each pitch joint of a supporting leg.
///
/// `pose` holds link angles about the neutral link axis, i.e. with the horn
/// offsets already applied (see [`crate::kinematics::physical_pose`]).
///
/// The foot carries `carried_fraction` of the total robot weight plus the leg's
/// own links. Each joint sees the foot reaction and every distal link weight
/// times its horizontal arm, summed as magnitudes (conservative worst case).
pub fn static_joint_torques(
    config: &RobotConfig,
    pose: &LegPose,
    carried_fraction: f64,
) -> JointTorques {
    let g = config.gravity_mps2;
    let (w2, w3) = leg_link_masses(config);
    let reaction = crate::config::total_mass(config) * carried_fraction + w2 + w3;
    let arms = leg_arms(config, pose);
    let knee = mass_moment_to_torque(reaction * arms.knee.0 + w3 * arms.knee.1, g);
    let elevator = arms.elevator.map(|(foot, c2, c3)| {
        mass_moment_to_torque(reaction * foot + w2 * c2 + w3 * c3, g)
    });
    let nominal = config.servo.nominal_torque_ncm;
    let feasible = knee <= nominal && elevator.is_none_or(|t| t <= nominal);
    JointTorques {
        elevator_ncm: elevator,
        knee_ncm: knee,
        nominal_ncm: nominal,
        feasible,
    }
}

/// Total robot weight (grams) at which the binding joint of `pose` reaches
/// nominal torque. Inverse of [`static_joint_torques`] in the body weight.
pub fn max_total_weight_at_pose(config: &RobotConfig, pose: &LegPose, carried_fraction: f64) -> f64 {
    let g = config.gravity_mps2;
    let (w2, w3) = leg_link_masses(config);
    let budget = torque_to_mass_moment(config.servo.nominal_torque_ncm, g);
    let arms = leg_arms(config, pose);
    // torque(joint) = (W f + w2 + w3) foot + links <= budget, solve for W.
    let solve = |foot: f64, links: f64| -> f64 {
        if foot * carried_fraction <= 0.0 {
            return f64::INFINITY;
        }
        (budget - links - (w2 + w3) * foot) / (foot * carried_fraction)
    };
    let mut limit = solve(arms.knee.0, w3 * arms.knee.1);
    if let Some((foot, c2, c3)) = arms.elevator {
        limit = limit.min(solve(foot, w2 * c2 + w3 * c3));
    }
    limit
}

/// Link weights carried by one leg: (elevator link, knee link). Two-joint legs
/// have no separate elevator link.
pub fn leg_link_masses(config: &RobotConfig) -> (f64, f64) {
    match config.topology {
        LegTopology::TwoJoint => (0.0, config.masses.link3_g),
        LegTopology::ThreeJoint => (config.masses.link2_g, config.masses.link3_g),
    }
}
