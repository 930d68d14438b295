//! Differential-drive kinematics, the wheel-speed actuator bound and the
//! minimum turning radius it implies.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Vec2;

/// Slack allowed when validating `|v| + L|u| <= V`.
pub const CONSTRAINT_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RobotError {
    #[error("invalid robot parameter: {0}")]
    InvalidParams(String),
    #[error("control ({v}, {u}) violates |v| + L|u| <= V: {lhs} > {max_speed}")]
    ConstraintViolation { v: f64, u: f64, lhs: f64, max_speed: f64 },
    #[error("step duration must be positive, got {0}")]
    InvalidStep(f64),
    #[error("speed {v} outside the open interval (-V, V) with V = {max_speed}")]
    SpeedOutOfDomain { v: f64, max_speed: f64 },
}

/// Geometry and actuator limits of the vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotParams {
    /// Half of the axle length (m).
    pub half_axle: f64,
    /// Driving wheel radius (m).
    pub wheel_radius: f64,
    /// Common bound on both wheel angular speeds (rad/s).
    pub max_wheel_speed: f64,
}

impl RobotParams {
    pub fn new(half_axle: f64, wheel_radius: f64, max_wheel_speed: f64) -> Result<Self, RobotError> {
        let p = Self { half_axle, wheel_radius, max_wheel_speed };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), RobotError> {
        for (name, value) in [
            ("half_axle", self.half_axle),
            ("wheel_radius", self.wheel_radius),
            ("max_wheel_speed", self.max_wheel_speed),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(RobotError::InvalidParams(format!("{name} > 0 violated ({name}={value})")));
            }
        }
        Ok(())
    }

    /// Maximal linear speed `V = R_w * Omega`.
    pub fn max_speed(&self) -> f64 {
        self.wheel_radius * self.max_wheel_speed
    }

    /// Largest admissible turning rate at linear speed `v`.
    pub fn max_turn_rate(&self, v: f64) -> f64 {
        (self.max_speed() - v.abs()) / self.half_axle
    }

    pub fn check_input(&self, input: ControlInput) -> Result<(), RobotError> {
        let lhs = input.v.abs() + self.half_axle * input.u.abs();
        let max_speed = self.max_speed();
        if !(lhs <= max_speed + CONSTRAINT_TOL) {
            return Err(RobotError::ConstraintViolation { v: input.v, u: input.u, lhs, max_speed });
        }
        Ok(())
    }
}

/// Pose of the vehicle at time `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub x: f64,
    pub y: f64,
    /// Heading in (-pi, pi].
    pub theta: f64,
    #[serde(default)]
    pub t: f64,
}

impl RobotState {
    pub fn new(x: f64, y: f64, theta: f64, t: f64) -> Self {
        Self { x, y, theta: wrap_angle(theta), t }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn heading(&self) -> Vec2 {
        Vec2::new(self.theta.cos(), self.theta.sin())
    }

    /// Velocity vector when driving at linear speed `v`.
    pub fn velocity(&self, v: f64) -> Vec2 {
        self.heading() * v
    }
}

/// Linear speed `v` and turning rate `u`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlInput {
    pub v: f64,
    pub u: f64,
}

impl ControlInput {
    pub fn new(v: f64, u: f64) -> Self {
        Self { v, u }
    }
}

/// Wraps an angle into (-pi, pi]. Angles already in range are returned
/// untouched so that `wrap_angle(-a) == -wrap_angle(a)` holds bit-exactly
/// away from the branch cut.
pub fn wrap_angle(a: f64) -> f64 {
    if a > -PI && a <= PI {
        return a;
    }
    let r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let x2 = x * x;
        1.0 - x2 / 6.0 + x2 * x2 / 120.0
    } else {
        x.sin() / x
    }
}

/// Exact unicycle update for a control held constant over `dt`.
///
/// The displacement is the chord of the arc travelled,
/// `v dt sinc(u dt / 2)`, taken along the mid-step heading. This is exact
/// for both straight segments and circular arcs.
pub fn advance(state: RobotState, input: ControlInput, dt: f64) -> RobotState {
    let half_turn = 0.5 * input.u * dt;
    let chord = input.v * dt * sinc(half_turn);
    let mid = state.theta + half_turn;
    RobotState {
        x: state.x + chord * mid.cos(),
        y: state.y + chord * mid.sin(),
        theta: wrap_angle(state.theta + input.u * dt),
        t: state.t + dt,
    }
}

/// Advances `state` by one fixed step after validating the actuator bound.
pub fn step_kinematics(
    state: RobotState,
    input: ControlInput,
    dt: f64,
    params: &RobotParams,
) -> Result<RobotState, RobotError> {
    if !(dt > 0.0) {
        return Err(RobotError::InvalidStep(dt));
    }
    params.check_input(input)?;
    Ok(advance(state, input, dt))
}

/// Left and right wheel angular speeds `(omega_l, omega_r)` for a control.
pub fn wheel_speeds(input: ControlInput, params: &RobotParams) -> (f64, f64) {
    let l = params.half_axle;
    let omega_l = (input.v - l * input.u) / params.wheel_radius;
    let omega_r = (input.v + l * input.u) / params.wheel_radius;
    (omega_l, omega_r)
}

/// Inverse of [`wheel_speeds`].
pub fn control_from_wheels(omega_l: f64, omega_r: f64, params: &RobotParams) -> ControlInput {
    let v_l = params.wheel_radius * omega_l;
    let v_r = params.wheel_radius * omega_r;
    ControlInput { v: 0.5 * (v_l + v_r), u: (v_r - v_l) / (2.0 * params.half_axle) }
}

/// Smallest turning radius reachable at linear speed `v`: `L|v| / (V - |v|)`.
pub fn min_turning_radius(v: f64, params: &RobotParams) -> Result<f64, RobotError> {
    let max_speed = params.max_speed();
    if !(v.abs() < max_speed) {
        return Err(RobotError::SpeedOutOfDomain { v, max_speed });
    }
    Ok(params.half_axle * v.abs() / (max_speed - v.abs()))
}
