use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

/// Planar robot pose: position in meters, heading in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub w: f64,
}

impl Pose {
    /// Builds a pose, wrapping the heading into (-pi, pi].
    pub fn new(x: f64, y: f64, w: f64) -> Self {
        Self { x, y, w: wrap_angle(w) }
    }

    pub fn distance_to(&self, x: f64, y: f64) -> f64 {
        (self.x - x).hypot(self.y - y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.w.is_finite()
    }
}

/// Velocity command for a differential-drive base.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Command {
    /// Linear velocity, m/s.
    pub v: f64,
    /// Angular velocity, rad/s.
    pub omega: f64,
}

impl Command {
    /// Hard cap on |v| regardless of planner configuration.
    pub const MAX_V: f64 = 2.0;
    /// Hard cap on |omega| regardless of planner configuration.
    #[allow(clippy::approx_constant)]
    pub const MAX_OMEGA: f64 = 3.14;

    pub fn new(v: f64, omega: f64) -> Self {
        Self {
            v: v.clamp(-Self::MAX_V, Self::MAX_V),
            omega: omega.clamp(-Self::MAX_OMEGA, Self::MAX_OMEGA),
        }
    }
}

/// Wraps a finite angle into (-pi, pi].
pub(crate) fn wrap_angle(angle: f64) -> f64 {
    let r = angle.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}
