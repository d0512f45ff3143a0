//! Plays keyframed primitives by linear interpolation in joint space.

use crate::config::LEG_COUNT;
use crate::kinematics::LegPose;

use super::primitives::{MotionPrimitive, PrimitiveName};

#[derive(Debug, Clone)]
pub struct Executor {
    primitive: Option<MotionPrimitive>,
    index: usize,
    elapsed: f64,
    from: [LegPose; LEG_COUNT],
    current: [LegPose; LEG_COUNT],
    finished: bool,
    phase_boundary: bool,
}

impl Executor {
    pub fn new(initial: [LegPose; LEG_COUNT]) -> Self {
        Self {
            primitive: None,
            index: 0,
            elapsed: 0.0,
            from: initial,
            current: initial,
            finished: true,
            phase_boundary: false,
        }
    }

    pub fn name(&self) -> Option<PrimitiveName> {
        self.primitive.as_ref().map(|p| p.name)
    }

    /// Switches to `primitive` unless it is already playing. The first
    /// keyframe is approached from the current pose.
    pub fn play(&mut self, primitive: &MotionPrimitive) {
        if self.name() == Some(primitive.name) {
            return;
        }
        self.restart(primitive);
    }

    pub fn restart(&mut self, primitive: &MotionPrimitive) {
        self.primitive = Some(primitive.clone());
        self.index = 0;
        self.elapsed = 0.0;
        self.from = self.current;
        self.finished = false;
        self.phase_boundary = false;
    }

    /// Marks `primitive` as already played out, holding its final pose.
    pub fn hold(&mut self, primitive: &MotionPrimitive) {
        self.primitive = Some(primitive.clone());
        self.index = primitive.keyframes.len() - 1;
        self.elapsed = 0.0;
        self.current = *primitive.last_poses();
        self.from = self.current;
        self.finished = true;
        self.phase_boundary = false;
    }

    /// Non-cyclic primitive has reached and holds its last keyframe.
    pub fn finished(&self) -> bool {
        self.finished
    }

    /// True on the tick that completed a gait phase.
    pub fn phase_boundary(&self) -> bool {
        self.phase_boundary
    }

    pub fn current(&self) -> &[LegPose; LEG_COUNT] {
        &self.current
    }

    /// Advances by `dt` and returns the interpolated joint targets.
    pub fn tick(&mut self, dt: f64) -> [LegPose; LEG_COUNT] {
        self.phase_boundary = false;
        let Some(p) = &self.primitive else {
            return self.current;
        };
        if self.finished {
            return self.current;
        }
        self.elapsed += dt;
        loop {
            let duration = p.keyframes[self.index].duration_s;
            if self.elapsed < duration {
                break;
            }
            self.elapsed -= duration;
            self.from = p.keyframes[self.index].poses;
            let completed = self.index;
            if p.phase_len > 0 && completed > 0 && completed.is_multiple_of(p.phase_len) {
                self.phase_boundary = true;
            }
            if completed + 1 < p.keyframes.len() {
                self.index += 1;
            } else if p.cyclic && p.keyframes.len() > 1 {
                self.index = 1;
            } else {
                self.finished = true;
                self.elapsed = 0.0;
                self.current = self.from;
                return self.current;
            }
        }
        let target = &p.keyframes[self.index];
        let s = if target.duration_s > 0.0 {
            self.elapsed / target.duration_s
        } else {
            1.0
        };
        for i in 0..LEG_COUNT {
            self.current[i] = self.from[i].lerp(&target.poses[i], s);
        }
        self.current
    }
}
