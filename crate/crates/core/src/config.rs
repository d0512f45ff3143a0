//! Robot build description: leg topology, horn attachments, link geometry,
//! masses, servo and electronics parameters, and behavior tuning.
//!
//! Configurations are JSON documents with snake_case keys. Every numeric key
//! carries its unit as a suffix (`_cm`, `_g`, `_ncm`, `_ma`, `_us`, ...); there
//! is no unit parsing. Unknown keys are rejected.
//!
//! Optional keys and their defaults:
//!
//! | key | default |
//! |-----|---------|
//! | `comment` | absent |
//! | `attachments[i].elevator_option`, `attachments[i].knee_option` | neutral horn (0°) |
//! | `masses.link2_g` | 0 (only counted for three-joint legs) |
//! | `leg_roots` | ±7 cm square, legs pointing diagonally outward |
//! | `cog_height_cm` | 0 (centre of gravity in the leg-root plane) |
//! | `torque_arms` | d1 15.3, d2 4.7, d3 2.65, d4 2.35 cm |
//! | `gravity_mps2` | 9.81 |
//! | `servo.slew_rate_dps` | 300 |
//! | `servo.update_rate_hz` | 50 |
//! | `servo.i2c_address` | 0x40 |
//! | `battery.converter_efficiency` | 0.72 |
//! | `behavior` and each of its keys | see [`BehaviorParams::default`] |

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::feasibility::{self, BatteryPack, PowerBudget, TorqueArms, TorqueScenario};

pub const LEG_COUNT: usize = 4;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("schema violation: {0}")]
    Schema(String),
    #[error("{field} out of range: {value} ({expected})")]
    Range {
        field: String,
        value: f64,
        expected: &'static str,
    },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LegId {
    FrontLeft,
    FrontRight,
    RearLeft,
    RearRight,
}

impl LegId {
    pub const ALL: [LegId; LEG_COUNT] = [
        LegId::FrontLeft,
        LegId::FrontRight,
        LegId::RearLeft,
        LegId::RearRight,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_front(self) -> bool {
        matches!(self, LegId::FrontLeft | LegId::FrontRight)
    }

    pub fn is_left(self) -> bool {
        matches!(self, LegId::FrontLeft | LegId::RearLeft)
    }

    /// Reflection through the sagittal plane.
    pub fn mirrored(self) -> LegId {
        match self {
            LegId::FrontLeft => LegId::FrontRight,
            LegId::FrontRight => LegId::FrontLeft,
            LegId::RearLeft => LegId::RearRight,
            LegId::RearRight => LegId::RearLeft,
        }
    }

    pub fn diagonal(self) -> LegId {
        match self {
            LegId::FrontLeft => LegId::RearRight,
            LegId::FrontRight => LegId::RearLeft,
            LegId::RearLeft => LegId::FrontRight,
            LegId::RearRight => LegId::FrontLeft,
        }
    }

    pub fn short_name(self) -> &'static str {
        match self {
            LegId::FrontLeft => "FL",
            LegId::FrontRight => "FR",
            LegId::RearLeft => "RL",
            LegId::RearRight => "RR",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LegTopology {
    /// Rotator and knee.
    TwoJoint,
    /// Rotator, elevator and knee.
    ThreeJoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Joint {
    Rotator,
    Elevator,
    Knee,
}

impl LegTopology {
    /// Joints from proximal to distal.
    pub fn joints(self) -> &'static [Joint] {
        match self {
            LegTopology::TwoJoint => &[Joint::Rotator, Joint::Knee],
            LegTopology::ThreeJoint => &[Joint::Rotator, Joint::Elevator, Joint::Knee],
        }
    }

    pub fn joint_count(self) -> usize {
        self.joints().len()
    }

    /// Joints whose horn can be mounted in one of the four positions.
    pub fn reconfigurable_joints(self) -> usize {
        self.joint_count() - 1
    }

    pub fn short_name(self) -> &'static str {
        match self {
            LegTopology::TwoJoint => "2j",
            LegTopology::ThreeJoint => "3j",
        }
    }
}

/// One of the four servo-horn mounting positions of a reconfigurable joint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MountOption(u8);

impl MountOption {
    pub const ALL: [MountOption; 4] = [MountOption(1), MountOption(2), MountOption(3), MountOption(4)];

    pub fn new(option: u8) -> Option<Self> {
        (1..=4).contains(&option).then_some(Self(option))
    }

    pub fn get(self) -> u8 {
        self.0
    }

    /// Horn offset relative to the neutral link axis, degrees.
    pub fn offset_deg(self) -> f64 {
        match self.0 {
            1 => -90.0,
            2 => -45.0,
            3 => 45.0,
            _ => 90.0,
        }
    }
}

impl fmt::Display for MountOption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Horn mounting of one leg. `None` is the neutral mounting (no offset).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AttachmentConfig {
    pub elevator: Option<MountOption>,
    pub knee: Option<MountOption>,
}

impl AttachmentConfig {
    pub fn neutral() -> Self {
        Self::default()
    }

    pub fn knee_offset_deg(&self) -> f64 {
        self.knee.map_or(0.0, MountOption::offset_deg)
    }

    pub fn elevator_offset_deg(&self) -> f64 {
        self.elevator.map_or(0.0, MountOption::offset_deg)
    }
}

/// All mount combinations for one leg, ordered by (elevator, knee) option.
pub fn enumerate_attachments(topology: LegTopology) -> Vec<AttachmentConfig> {
    match topology {
        LegTopology::TwoJoint => MountOption::ALL
            .iter()
            .map(|&k| AttachmentConfig {
                elevator: None,
                knee: Some(k),
            })
            .collect(),
        LegTopology::ThreeJoint => MountOption::ALL
            .iter()
            .flat_map(|&e| {
                MountOption::ALL.iter().map(move |&k| AttachmentConfig {
                    elevator: Some(e),
                    knee: Some(k),
                })
            })
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkLengths {
    pub cog_to_elevator_cm: f64,
    pub elevator_to_knee_cm: f64,
    pub knee_to_foot_cm: f64,
}

impl LinkLengths {
    /// Length of the chain distal to the rotator.
    pub fn reach_cm(&self) -> f64 {
        self.elevator_to_knee_cm + self.knee_to_foot_cm
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkMasses {
    pub body_g: f64,
    #[serde(default)]
    pub link2_g: f64,
    pub link3_g: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServoSpec {
    pub nominal_torque_ncm: f64,
    pub angular_range_deg: f64,
    pub pulse_min_us: f64,
    pub pulse_max_us: f64,
    pub servo_current_ma: f64,
    #[serde(default = "default_slew")]
    pub slew_rate_dps: f64,
    #[serde(default = "default_update_rate")]
    pub update_rate_hz: f64,
    #[serde(default = "default_i2c_address")]
    pub i2c_address: u8,
}

fn default_slew() -> f64 {
    300.0
}
fn default_update_rate() -> f64 {
    50.0
}
fn default_i2c_address() -> u8 {
    0x40
}

impl ServoSpec {
    /// Largest commanded deviation from the servo centre, degrees.
    pub fn half_range_deg(&self) -> f64 {
        self.angular_range_deg / 2.0
    }
}

/// Leg root in the body frame (x forward, y left, z up).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LegRoot {
    pub x_cm: f64,
    pub y_cm: f64,
    /// Direction of the neutral leg axis, degrees from body x.
    pub mount_yaw_deg: f64,
}

fn default_leg_roots() -> [LegRoot; LEG_COUNT] {
    [
        LegRoot { x_cm: 7.0, y_cm: 7.0, mount_yaw_deg: 45.0 },
        LegRoot { x_cm: 7.0, y_cm: -7.0, mount_yaw_deg: -45.0 },
        LegRoot { x_cm: -7.0, y_cm: 7.0, mount_yaw_deg: 135.0 },
        LegRoot { x_cm: -7.0, y_cm: -7.0, mount_yaw_deg: -135.0 },
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TurnDirection {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GaitParams {
    pub step_length_cm: f64,
    pub step_height_cm: f64,
    pub cycle_time_s: f64,
    /// Swing order, one leg per quarter cycle.
    pub stance_order: [LegId; LEG_COUNT],
}

impl Default for GaitParams {
    fn default() -> Self {
        Self {
            step_length_cm: 3.0,
            step_height_cm: 2.5,
            cycle_time_s: 2.0,
            stance_order: [LegId::RearLeft, LegId::FrontLeft, LegId::RearRight, LegId::FrontRight],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BehaviorParams {
    pub obstacle_threshold_m: f64,
    /// Grab when | |accel| - g | exceeds this fraction of g.
    pub grab_accel_fraction: f64,
    pub grab_tilt_deg: f64,
    pub grab_persistence_s: f64,
    pub imu_window_s: f64,
    pub kp: f64,
    pub kd: f64,
    pub correction_limit_deg: f64,
    /// Time constant of the complementary tilt filter used while balancing.
    pub tilt_filter_s: f64,
    pub avoid_turn_deg: f64,
    pub avoid_direction: TurnDirection,
    /// Foot height below the leg roots while standing.
    pub stance_height_cm: f64,
    /// Horizontal foot distance from the leg root while standing (three-joint
    /// legs only; two-joint legs derive it from the stance height).
    pub stance_radius_cm: f64,
    /// Body shift toward the swing leg before it lifts.
    pub sway_cm: f64,
    /// Stance height of the two supporting legs in the balance pose.
    pub balance_height_cm: f64,
    /// Lift of the two raised legs in the balance pose.
    pub balance_raise_cm: f64,
    /// Knee change that extends the front legs and folds the rear ones.
    pub look_up_deg: f64,
    pub init_settle_s: f64,
    pub photo_hold_s: f64,
    pub gait: GaitParams,
}

impl Default for BehaviorParams {
    fn default() -> Self {
        Self {
            obstacle_threshold_m: 0.2,
            grab_accel_fraction: 0.3,
            grab_tilt_deg: 25.0,
            grab_persistence_s: 0.2,
            imu_window_s: 0.5,
            kp: 0.8,
            kd: 0.1,
            correction_limit_deg: 5.0,
            tilt_filter_s: 0.5,
            avoid_turn_deg: 45.0,
            avoid_direction: TurnDirection::Left,
            stance_height_cm: 4.0,
            stance_radius_cm: 6.5,
            sway_cm: 1.5,
            balance_height_cm: 3.0,
            balance_raise_cm: 5.0,
            look_up_deg: 20.0,
            init_settle_s: 1.0,
            photo_hold_s: 0.5,
            gait: GaitParams::default(),
        }
    }
}

/// Full parametric description of one robot build.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotConfig {
    pub name: String,
    pub comment: Option<String>,
    pub topology: LegTopology,
    pub attachments: [AttachmentConfig; LEG_COUNT],
    pub links: LinkLengths,
    pub masses: LinkMasses,
    pub leg_roots: [LegRoot; LEG_COUNT],
    pub cog_height_cm: f64,
    pub servo: ServoSpec,
    pub electronics: PowerBudget,
    pub battery: BatteryPack,
    pub torque_arms: TorqueArms,
    pub gravity_mps2: f64,
    pub behavior: BehaviorParams,
}

impl RobotConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        parse_config(&text)
    }

    pub fn root(&self, leg: LegId) -> &LegRoot {
        &self.leg_roots[leg.index()]
    }

    pub fn attachment(&self, leg: LegId) -> &AttachmentConfig {
        &self.attachments[leg.index()]
    }

    /// Non-fatal findings: currently only a total mass above the static limit.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Ok(limit) = feasibility::max_body_weight(&TorqueScenario::from_config(self)) {
            let mass = total_mass(self);
            if mass > limit {
                out.push(format!(
                    "total mass {mass:.1} g exceeds the static limit {limit:.1} g"
                ));
            }
        }
        out
    }
}

/// Body mass plus the link masses of all four legs.
pub fn total_mass(config: &RobotConfig) -> f64 {
    let (w2, w3) = feasibility::leg_link_masses(config);
    config.masses.body_g + LEG_COUNT as f64 * (w2 + w3)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AttachmentEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    elevator_option: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    knee_option: Option<u8>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ElectronicsSection {
    rail_voltage_v: f64,
    controller_peak_current_a: f64,
    servo_count: u32,
    converter_count: u32,
    converter_max_power_w: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BatterySection {
    cell_count_parallel: u32,
    cell_capacity_mah: f64,
    average_voltage_v: f64,
    #[serde(default = "default_efficiency")]
    converter_efficiency: f64,
}

fn default_efficiency() -> f64 {
    0.72
}

fn default_gravity() -> f64 {
    feasibility::STANDARD_GRAVITY
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigDocument {
    name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    comment: Option<String>,
    legs: u32,
    topology: LegTopology,
    attachments: Vec<AttachmentEntry>,
    links: LinkLengths,
    masses: LinkMasses,
    #[serde(default = "default_leg_roots")]
    leg_roots: [LegRoot; LEG_COUNT],
    #[serde(default)]
    cog_height_cm: f64,
    servo: ServoSpec,
    electronics: ElectronicsSection,
    battery: BatterySection,
    #[serde(default)]
    torque_arms: TorqueArms,
    #[serde(default = "default_gravity")]
    gravity_mps2: f64,
    #[serde(default)]
    behavior: BehaviorParams,
}

fn range(field: impl Into<String>, value: f64, expected: &'static str) -> ConfigError {
    ConfigError::Range {
        field: field.into(),
        value,
        expected,
    }
}

fn positive(field: &str, value: f64) -> Result<(), ConfigError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(range(field, value, "> 0"))
    }
}

fn non_negative(field: &str, value: f64) -> Result<(), ConfigError> {
    if value >= 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(range(field, value, ">= 0"))
    }
}

fn mount(field: String, option: Option<u8>) -> Result<Option<MountOption>, ConfigError> {
    option
        .map(|o| MountOption::new(o).ok_or_else(|| range(field, o as f64, "1..=4")))
        .transpose()
}

impl ConfigDocument {
    fn into_config(self) -> Result<RobotConfig, ConfigError> {
        if self.legs as usize != LEG_COUNT {
            return Err(ConfigError::Schema(format!(
                "legs must be {LEG_COUNT}, got {}",
                self.legs
            )));
        }
        if self.attachments.len() != LEG_COUNT {
            return Err(ConfigError::Schema(format!(
                "attachments must list {LEG_COUNT} legs, got {}",
                self.attachments.len()
            )));
        }
        let mut attachments = [AttachmentConfig::neutral(); LEG_COUNT];
        for (i, entry) in self.attachments.iter().enumerate() {
            if self.topology == LegTopology::TwoJoint && entry.elevator_option.is_some() {
                return Err(ConfigError::Schema(format!(
                    "attachments[{i}].elevator_option given for a two-joint leg"
                )));
            }
            attachments[i] = AttachmentConfig {
                elevator: mount(format!("attachments[{i}].elevator_option"), entry.elevator_option)?,
                knee: mount(format!("attachments[{i}].knee_option"), entry.knee_option)?,
            };
        }

        let l = &self.links;
        positive("links.cog_to_elevator_cm", l.cog_to_elevator_cm)?;
        positive("links.elevator_to_knee_cm", l.elevator_to_knee_cm)?;
        positive("links.knee_to_foot_cm", l.knee_to_foot_cm)?;
        non_negative("masses.body_g", self.masses.body_g)?;
        non_negative("masses.link2_g", self.masses.link2_g)?;
        non_negative("masses.link3_g", self.masses.link3_g)?;

        let s = &self.servo;
        positive("servo.nominal_torque_ncm", s.nominal_torque_ncm)?;
        if !(s.angular_range_deg > 0.0 && s.angular_range_deg <= 360.0) {
            return Err(range("servo.angular_range_deg", s.angular_range_deg, "(0, 360]"));
        }
        non_negative("servo.pulse_min_us", s.pulse_min_us)?;
        if !(s.pulse_min_us < s.pulse_max_us) {
            return Err(range("servo.pulse_max_us", s.pulse_max_us, "> pulse_min_us"));
        }
        non_negative("servo.servo_current_ma", s.servo_current_ma)?;
        positive("servo.slew_rate_dps", s.slew_rate_dps)?;
        positive("servo.update_rate_hz", s.update_rate_hz)?;
        if s.i2c_address > 0x7F {
            return Err(range("servo.i2c_address", s.i2c_address as f64, "7-bit address"));
        }

        let e = &self.electronics;
        positive("electronics.rail_voltage_v", e.rail_voltage_v)?;
        positive("electronics.controller_peak_current_a", e.controller_peak_current_a)?;
        positive("electronics.converter_max_power_w", e.converter_max_power_w)?;
        if e.converter_count == 0 {
            return Err(range("electronics.converter_count", 0.0, ">= 1"));
        }
        let b = &self.battery;
        if b.cell_count_parallel == 0 {
            return Err(range("battery.cell_count_parallel", 0.0, ">= 1"));
        }
        positive("battery.cell_capacity_mah", b.cell_capacity_mah)?;
        positive("battery.average_voltage_v", b.average_voltage_v)?;
        if !(b.converter_efficiency > 0.0 && b.converter_efficiency <= 1.0) {
            return Err(range("battery.converter_efficiency", b.converter_efficiency, "(0, 1]"));
        }
        let a = &self.torque_arms;
        for (field, v) in [
            ("torque_arms.d1_cm", a.d1_cm),
            ("torque_arms.d2_cm", a.d2_cm),
            ("torque_arms.d3_cm", a.d3_cm),
            ("torque_arms.d4_cm", a.d4_cm),
        ] {
            non_negative(field, v)?;
        }
        positive("gravity_mps2", self.gravity_mps2)?;
        validate_behavior(&self.behavior)?;

        Ok(RobotConfig {
            name: self.name,
            comment: self.comment,
            topology: self.topology,
            attachments,
            links: self.links,
            masses: self.masses,
            leg_roots: self.leg_roots,
            cog_height_cm: self.cog_height_cm,
            servo: self.servo,
            electronics: PowerBudget {
                rail_voltage_v: e.rail_voltage_v,
                controller_peak_current_a: e.controller_peak_current_a,
                servo_current_a: s.servo_current_ma / 1000.0,
                servo_count: e.servo_count,
                converter_count: e.converter_count,
                converter_max_power_w: e.converter_max_power_w,
            },
            battery: BatteryPack {
                cell_count_parallel: b.cell_count_parallel,
                cell_capacity_mah: b.cell_capacity_mah,
                average_voltage_v: b.average_voltage_v,
                converter_efficiency: b.converter_efficiency,
            },
            torque_arms: self.torque_arms,
            gravity_mps2: self.gravity_mps2,
            behavior: self.behavior,
        })
    }

    fn from_config(c: &RobotConfig) -> Self {
        ConfigDocument {
            name: c.name.clone(),
            comment: c.comment.clone(),
            legs: LEG_COUNT as u32,
            topology: c.topology,
            attachments: c
                .attachments
                .iter()
                .map(|a| AttachmentEntry {
                    elevator_option: a.elevator.map(MountOption::get),
                    knee_option: a.knee.map(MountOption::get),
                })
                .collect(),
            links: c.links,
            masses: c.masses,
            leg_roots: c.leg_roots,
            cog_height_cm: c.cog_height_cm,
            servo: c.servo,
            electronics: ElectronicsSection {
                rail_voltage_v: c.electronics.rail_voltage_v,
                controller_peak_current_a: c.electronics.controller_peak_current_a,
                servo_count: c.electronics.servo_count,
                converter_count: c.electronics.converter_count,
                converter_max_power_w: c.electronics.converter_max_power_w,
            },
            battery: BatterySection {
                cell_count_parallel: c.battery.cell_count_parallel,
                cell_capacity_mah: c.battery.cell_capacity_mah,
                average_voltage_v: c.battery.average_voltage_v,
                converter_efficiency: c.battery.converter_efficiency,
            },
            torque_arms: c.torque_arms,
            gravity_mps2: c.gravity_mps2,
            behavior: c.behavior,
        }
    }
}

fn validate_behavior(b: &BehaviorParams) -> Result<(), ConfigError> {
    positive("behavior.obstacle_threshold_m", b.obstacle_threshold_m)?;
    positive("behavior.grab_accel_fraction", b.grab_accel_fraction)?;
    positive("behavior.grab_tilt_deg", b.grab_tilt_deg)?;
    positive("behavior.grab_persistence_s", b.grab_persistence_s)?;
    if !(b.imu_window_s >= b.grab_persistence_s) {
        return Err(range("behavior.imu_window_s", b.imu_window_s, ">= grab_persistence_s"));
    }
    non_negative("behavior.kp", b.kp)?;
    non_negative("behavior.kd", b.kd)?;
    positive("behavior.correction_limit_deg", b.correction_limit_deg)?;
    positive("behavior.tilt_filter_s", b.tilt_filter_s)?;
    positive("behavior.avoid_turn_deg", b.avoid_turn_deg)?;
    positive("behavior.stance_height_cm", b.stance_height_cm)?;
    positive("behavior.stance_radius_cm", b.stance_radius_cm)?;
    non_negative("behavior.sway_cm", b.sway_cm)?;
    positive("behavior.balance_height_cm", b.balance_height_cm)?;
    positive("behavior.balance_raise_cm", b.balance_raise_cm)?;
    non_negative("behavior.look_up_deg", b.look_up_deg)?;
    non_negative("behavior.init_settle_s", b.init_settle_s)?;
    non_negative("behavior.photo_hold_s", b.photo_hold_s)?;
    let g = &b.gait;
    positive("behavior.gait.step_length_cm", g.step_length_cm)?;
    positive("behavior.gait.step_height_cm", g.step_height_cm)?;
    positive("behavior.gait.cycle_time_s", g.cycle_time_s)?;
    let mut seen = [false; LEG_COUNT];
    for leg in g.stance_order {
        if std::mem::replace(&mut seen[leg.index()], true) {
            return Err(ConfigError::Schema(
                "behavior.gait.stance_order must be a permutation of the four legs".into(),
            ));
        }
    }
    Ok(())
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<RobotConfig, ConfigError> {
    let doc: ConfigDocument = serde_json::from_str(text).map_err(|e| match e.classify() {
        serde_json::error::Category::Data => ConfigError::Schema(e.to_string()),
        _ => ConfigError::Syntax {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        },
    })?;
    let config = doc.into_config()?;
    for w in config.warnings() {
        log::warn!("{}: {w}", config.name);
    }
    Ok(config)
}

/// Writes a configuration back out with every field explicit.
pub fn serialize_config(config: &RobotConfig) -> String {
    serde_json::to_string_pretty(&ConfigDocument::from_config(config))
        .expect("configuration documents always serialize")
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_JOINT: &str = include_str!("../../../configs/locoquad-2j.json");
    const THREE_JOINT: &str = include_str!("../../../configs/locoquad-3j.json");

    #[test]
    fn shipped_two_joint_config() {
        let c = parse_config(TWO_JOINT).unwrap();
        assert_eq!(c.topology, LegTopology::TwoJoint);
        assert_eq!(c.links.cog_to_elevator_cm, 10.0);
        assert_eq!(c.links.elevator_to_knee_cm, 5.3);
        assert_eq!(c.links.knee_to_foot_cm, 4.7);
        assert_eq!(c.servo.nominal_torque_ncm, 18.0);
        assert_eq!(total_mass(&c), 560.0);
        assert!(c.warnings().is_empty());
    }

    #[test]
    fn shipped_three_joint_config() {
        let c = parse_config(THREE_JOINT).unwrap();
        assert_eq!(c.topology, LegTopology::ThreeJoint);
        assert_eq!(total_mass(&c), 670.0);
        assert_eq!(c.electronics.servo_count, 12);
    }

    fn edit(f: impl FnOnce(&mut serde_json::Value)) -> String {
        let mut v: serde_json::Value = serde_json::from_str(TWO_JOINT).unwrap();
        f(&mut v);
        v.to_string()
    }

    #[test]
    fn three_legs_is_schema_violation() {
        let text = edit(|v| v["legs"] = 3.into());
        assert!(matches!(parse_config(&text), Err(ConfigError::Schema(_))));
    }

    #[test]
    fn knee_option_five_is_range_error() {
        let text = edit(|v| v["attachments"][1]["knee_option"] = 5.into());
        match parse_config(&text) {
            Err(ConfigError::Range { field, value, .. }) => {
                assert_eq!(field, "attachments[1].knee_option");
                assert_eq!(value, 5.0);
            }
            other => panic!("expected range error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_or_wrong_unit_keys_rejected() {
        let text = edit(|v| {
            let links = v["links"].as_object_mut().unwrap();
            let x = links.remove("knee_to_foot_cm").unwrap();
            links.insert("knee_to_foot_mm".into(), x);
        });
        assert!(matches!(parse_config(&text), Err(ConfigError::Schema(_))));
        let text = edit(|v| v["colour"] = "red".into());
        assert!(matches!(parse_config(&text), Err(ConfigError::Schema(_))));
    }

    #[test]
    fn syntax_error_reports_position() {
        let err = parse_config("{\n  \"name\": \"x\",\n  oops\n}").unwrap_err();
        match err {
            ConfigError::Syntax { line, column, .. } => {
                assert_eq!(line, 3);
                assert!(column > 0);
            }
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn elevator_option_on_two_joint_leg_rejected() {
        let text = edit(|v| v["attachments"][0]["elevator_option"] = 2.into());
        assert!(matches!(parse_config(&text), Err(ConfigError::Schema(_))));
    }

    #[test]
    fn defaults_are_applied() {
        let text = edit(|v| {
            let o = v.as_object_mut().unwrap();
            o.remove("behavior");
            o.remove("leg_roots");
            o.remove("torque_arms");
        });
        let c = parse_config(&text).unwrap();
        assert_eq!(c.behavior, BehaviorParams::default());
        assert_eq!(c.leg_roots, default_leg_roots());
        assert_eq!(c.torque_arms, TorqueArms::default());
        assert_eq!(c.gravity_mps2, 9.81);
    }

    #[test]
    fn enumeration_counts_and_order() {
        let two = enumerate_attachments(LegTopology::TwoJoint);
        assert_eq!(two.len(), 4);
        let three = enumerate_attachments(LegTopology::ThreeJoint);
        assert_eq!(three.len(), 16);
        assert_eq!(three.len(), 4 * 4);
        for pair in three.windows(2) {
            let key = |a: &AttachmentConfig| (a.elevator, a.knee);
            assert!(key(&pair[0]) < key(&pair[1]));
        }
    }

    #[test]
    fn mount_offsets_are_symmetric_within_range() {
        let offsets: Vec<f64> = MountOption::ALL.iter().map(|m| m.offset_deg()).collect();
        assert_eq!(offsets, vec![-90.0, -45.0, 45.0, 90.0]);
        assert!(MountOption::new(0).is_none());
        assert!(MountOption::new(5).is_none());
    }

    #[test]
    fn zero_masses_total_zero() {
        let mut c = parse_config(THREE_JOINT).unwrap();
        c.masses = LinkMasses {
            body_g: 0.0,
            link2_g: 0.0,
            link3_g: 0.0,
        };
        assert_eq!(total_mass(&c), 0.0);
    }

    #[test]
    fn heavy_build_only_warns() {
        let text = edit(|v| v["masses"]["body_g"] = 5000.into());
        let c = parse_config(&text).unwrap();
        assert_eq!(c.warnings().len(), 1);
    }

    #[test]
    fn serialize_round_trip_of_shipped_configs() {
        for text in [TWO_JOINT, THREE_JOINT] {
            let c = parse_config(text).unwrap();
            assert_eq!(parse_config(&serialize_config(&c)).unwrap(), c);
        }
    }
}
