//! JSON Lines trace records with a fixed field order.

use std::fmt::Write as _;

use crate::hal::{ImuSample, RangeReading};
use crate::kinematics::{BodyState, LegPose};

/// Significant digits of every float in the trace.
pub const TRACE_DIGITS: usize = 9;

/// Formats like C's `%.9g`: shortest of fixed and exponent notation, no
/// trailing zeros. Non-finite values become `null`; negative zero prints as
/// `0`.
pub fn format_float(x: f64) -> String {
    if !x.is_finite() {
        return "null".to_string();
    }
    if x == 0.0 {
        return "0".to_string();
    }
    let sci = format!("{:.*e}", TRACE_DIGITS - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..TRACE_DIGITS as i32).contains(&exp) {
        let decimals = (TRACE_DIGITS as i32 - 1 - exp).max(0) as usize;
        trim(&format!("{:.*}", decimals, x))
    } else {
        format!("{}e{}", trim(mantissa), exp)
    }
}

fn trim(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

fn push_array(out: &mut String, values: impl IntoIterator<Item = f64>) {
    out.push('[');
    for (i, v) in values.into_iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str(&format_float(v));
    }
    out.push(']');
}

/// One tick of a simulation run.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub t: f64,
    pub state: String,
    pub joints: Vec<LegPose>,
    pub body: BodyState,
    pub range: RangeReading,
    pub imu: ImuSample,
    pub events: Vec<String>,
}

impl TraceRecord {
    /// `{t, state, joints, body{x,y,z,roll,pitch,yaw}, range_m, accel, gyro,
    /// events}`; body position in cm, angles in degrees, `range_m` null on
    /// timeout.
    pub fn to_json_line(&self) -> String {
        let mut out = String::with_capacity(384);
        let _ = write!(out, "{{\"t\":{},\"state\":", format_float(self.t));
        out.push_str(&serde_json::to_string(&self.state).expect("string serializes"));
        out.push_str(",\"joints\":[");
        for (i, p) in self.joints.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            push_array(&mut out, p.angles());
        }
        let b = &self.body;
        let _ = write!(
            out,
            "],\"body\":{{\"x\":{},\"y\":{},\"z\":{},\"roll\":{},\"pitch\":{},\"yaw\":{}}},\"range_m\":",
            format_float(b.x),
            format_float(b.y),
            format_float(b.z),
            format_float(b.roll),
            format_float(b.pitch),
            format_float(b.yaw)
        );
        match self.range {
            RangeReading::Distance(d) => out.push_str(&format_float(d)),
            RangeReading::Timeout => out.push_str("null"),
        }
        out.push_str(",\"accel\":");
        push_array(&mut out, self.imu.accel);
        out.push_str(",\"gyro\":");
        push_array(&mut out, self.imu.gyro);
        out.push_str(",\"events\":");
        out.push_str(&serde_json::to_string(&self.events).expect("strings serialize"));
        out.push('}');
        out
    }
}
