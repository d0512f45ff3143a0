//! Device-facing interfaces and their emulated backends.
//!
//! Servos are driven through a register-level emulation of the 16-channel PWM
//! controller so the command path is exercised down to I2C bytes. The range
//! sensor and IMU are exposed in calibrated SI units; camera and buzzer only
//! record timestamped events.
//!
//! Device instances are owned by a single control loop. They are `Send` and
//! may be handed to another thread between runs, but one instance must not be
//! accessed concurrently.

pub mod pca9685;

use serde::Serialize;
use thiserror::Error;

use crate::config::{LegId, LegTopology, ServoSpec, LEG_COUNT};
use crate::kinematics::LegPose;

pub use pca9685::{
    compute_prescale, off_count, set_channel_pulse, I2cBus, I2cTransaction, Pca9685Driver,
    Pca9685Emulator, CHANNEL_COUNT,
};

/// Speed of sound used for echo timing, m/s.
pub const SPEED_OF_SOUND_MPS: f64 = 343.0;
/// Longest distance the ultrasonic sensor reports, m.
pub const MAX_RANGE_M: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HalError {
    #[error("angle {angle}° outside servo range [0, {range}]")]
    AngleOutOfRange { angle: f64, range: f64 },
    #[error("update rate {0} Hz gives a prescale outside [3, 255]")]
    RateOutOfBand(f64),
    #[error("channel {0} out of range (0..16)")]
    ChannelOutOfRange(usize),
    #[error("pulse {pulse} µs exceeds the {period} µs period")]
    PulseExceedsPeriod { pulse: f64, period: f64 },
    #[error("no device at address 0x{0:02X}")]
    NoDevice(u8),
    #[error("protocol violation: {0}")]
    Protocol(&'static str),
}

/// Maps a servo angle in [0, range] linearly onto [pulse_min, pulse_max].
pub fn angle_to_pulse(spec: &ServoSpec, angle_deg: f64) -> Result<f64, HalError> {
    let range = spec.angular_range_deg;
    if !(0.0..=range).contains(&angle_deg) {
        return Err(HalError::AngleOutOfRange {
            angle: angle_deg,
            range,
        });
    }
    Ok(spec.pulse_min_us + (spec.pulse_max_us - spec.pulse_min_us) * angle_deg / range)
}

/// Pulse width encoded by an OFF count with ON at 0.
pub fn pulse_from_off_count(off: u16, update_rate_hz: f64) -> f64 {
    off as f64 / pca9685::COUNTER_STEPS * 1e6 / update_rate_hz
}

/// Inverse of [`angle_to_pulse`]; not range-checked.
pub fn pulse_to_angle(spec: &ServoSpec, pulse_us: f64) -> f64 {
    (pulse_us - spec.pulse_min_us) / (spec.pulse_max_us - spec.pulse_min_us) * spec.angular_range_deg
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum RangeReading {
    Distance(f64),
    Timeout,
}

impl RangeReading {
    pub fn distance(&self) -> Option<f64> {
        match *self {
            RangeReading::Distance(d) => Some(d),
            RangeReading::Timeout => None,
        }
    }

    pub fn from_distance(d: f64) -> Self {
        if (0.0..=MAX_RANGE_M).contains(&d) {
            RangeReading::Distance(d)
        } else {
            RangeReading::Timeout
        }
    }
}

/// Round-trip echo time to a range reading.
pub fn range_from_echo(echo_s: f64) -> RangeReading {
    RangeReading::from_distance(SPEED_OF_SOUND_MPS * echo_s.max(0.0) / 2.0)
}

/// Specific force (m/s², body frame, +g on z at rest) and body rates (deg/s).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct ImuSample {
    pub accel: [f64; 3],
    pub gyro: [f64; 3],
}

impl ImuSample {
    pub fn accel_norm(&self) -> f64 {
        let [x, y, z] = self.accel;
        (x * x + y * y + z * z).sqrt()
    }

    /// Roll and pitch (degrees) of the body implied by the measured gravity.
    pub fn gravity_roll_pitch(&self) -> (f64, f64) {
        let [x, y, z] = self.accel;
        let roll = y.atan2(z).to_degrees();
        let pitch = (-x).atan2(y.hypot(z)).to_degrees();
        (roll, pitch)
    }

    /// Angle between measured specific force and the body z axis, degrees.
    pub fn tilt_deg(&self) -> f64 {
        let n = self.accel_norm();
        if n == 0.0 {
            return 0.0;
        }
        (self.accel[2] / n).clamp(-1.0, 1.0).acos().to_degrees()
    }
}

pub trait RangeSensor {
    fn read_range(&mut self) -> RangeReading;
}

pub trait Imu {
    fn read_imu(&mut self) -> ImuSample;
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum DeviceEventKind {
    CameraTrigger,
    Beep,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviceEvent {
    pub t: f64,
    pub kind: DeviceEventKind,
}

pub trait Camera {
    fn trigger(&mut self, t: f64);
}

pub trait Buzzer {
    fn beep(&mut self, t: f64);
}

/// Holds the latest synthesized reading; the simulator writes, the controller
/// reads.
#[derive(Debug, Clone, Copy)]
pub struct EmulatedRangeSensor {
    pub latest: RangeReading,
}

impl Default for EmulatedRangeSensor {
    fn default() -> Self {
        Self {
            latest: RangeReading::Timeout,
        }
    }
}

impl RangeSensor for EmulatedRangeSensor {
    fn read_range(&mut self) -> RangeReading {
        self.latest
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct EmulatedImu {
    pub latest: ImuSample,
}

impl Imu for EmulatedImu {
    fn read_imu(&mut self) -> ImuSample {
        self.latest
    }
}

/// Camera and buzzer backend that appends to an event log.
#[derive(Debug, Clone, Default)]
pub struct EventRecorder {
    pub events: Vec<DeviceEvent>,
}

impl EventRecorder {
    pub fn drain(&mut self) -> Vec<DeviceEvent> {
        std::mem::take(&mut self.events)
    }
}

impl Camera for EventRecorder {
    fn trigger(&mut self, t: f64) {
        self.events.push(DeviceEvent {
            t,
            kind: DeviceEventKind::CameraTrigger,
        });
    }
}

impl Buzzer for EventRecorder {
    fn beep(&mut self, t: f64) {
        self.events.push(DeviceEvent {
            t,
            kind: DeviceEventKind::Beep,
        });
    }
}

/// PWM channel of a joint: legs in [`LegId::ALL`] order, joints proximal to
/// distal, packed from channel 0.
pub fn joint_channel(topology: LegTopology, leg: LegId, joint_index: usize) -> usize {
    leg.index() * topology.joint_count() + joint_index
}

/// Drives all leg servos through a PWM controller on an I2C bus.
#[derive(Debug)]
pub struct ServoArray<B: I2cBus> {
    driver: Pca9685Driver<B>,
    spec: ServoSpec,
    topology: LegTopology,
}

impl<B: I2cBus> ServoArray<B> {
    pub fn new(bus: B, spec: ServoSpec, topology: LegTopology) -> Result<Self, HalError> {
        let mut driver = Pca9685Driver::new(bus, spec.i2c_address, spec.update_rate_hz);
        driver.init()?;
        Ok(Self {
            driver,
            spec,
            topology,
        })
    }

    /// Commands a joint to an angle about the servo centre.
    pub fn set_joint(&mut self, leg: LegId, joint_index: usize, angle_deg: f64) -> Result<(), HalError> {
        let pulse = angle_to_pulse(&self.spec, angle_deg + self.spec.half_range_deg())?;
        let channel = joint_channel(self.topology, leg, joint_index);
        self.driver.set_pulse(channel, pulse)
    }

    pub fn set_poses(&mut self, poses: &[LegPose; LEG_COUNT]) -> Result<(), HalError> {
        for leg in LegId::ALL {
            for (j, angle) in poses[leg.index()].angles().into_iter().enumerate() {
                self.set_joint(leg, j, angle)?;
            }
        }
        Ok(())
    }

    /// Reads back the commanded angle (about centre) of a joint from the
    /// device's OFF count.
    pub fn readback(&self, leg: LegId, joint_index: usize) -> f64
    where
        B: AsRef<Pca9685Emulator>,
    {
        let channel = joint_channel(self.topology, leg, joint_index);
        let (_, off) = self.driver.bus().as_ref().channel_counts(channel);
        let pulse = pulse_from_off_count(off, self.spec.update_rate_hz);
        pulse_to_angle(&self.spec, pulse) - self.spec.half_range_deg()
    }

    /// All joint angles as the device would drive them.
    pub fn readback_poses(&self) -> [LegPose; LEG_COUNT]
    where
        B: AsRef<Pca9685Emulator>,
    {
        LegId::ALL.map(|leg| {
            let angles: Vec<f64> = (0..self.topology.joint_count())
                .map(|j| self.readback(leg, j))
                .collect();
            LegPose::from_angles(self.topology, &angles)
        })
    }

    pub fn bus(&self) -> &B {
        self.driver.bus()
    }

    pub fn bus_mut(&mut self) -> &mut B {
        self.driver.bus_mut()
    }
}
