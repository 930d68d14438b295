//! Hybrid navigation law: sliding-mode obstacle avoidance, straight-line
//! pursuit of the target, and the switching rules between them.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::robot::{wrap_angle, ControlInput, RobotParams, RobotState};
use crate::sensing::SensorReading;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControllerError {
    #[error("invalid controller parameters: {0}")]
    InvalidParams(String),
}

/// Orientation of the avoidance manoeuvre.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignVariant {
    /// `u = +(V - v)/L sgn(S)`: the obstacle ends up on the robot's left.
    Normal,
    /// `u = -(V - v)/L sgn(S)`: the obstacle ends up on the robot's right.
    Reversed,
}

impl SignVariant {
    pub fn factor(self) -> f64 {
        match self {
            SignVariant::Normal => 1.0,
            SignVariant::Reversed => -1.0,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            SignVariant::Normal => SignVariant::Reversed,
            SignVariant::Reversed => SignVariant::Normal,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SignVariant::Normal => "normal",
            SignVariant::Reversed => "reversed",
        }
    }
}

impl std::str::FromStr for SignVariant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "normal" => Ok(SignVariant::Normal),
            "reversed" => Ok(SignVariant::Reversed),
            other => Err(format!("unknown sign variant '{other}' (expected normal|reversed)")),
        }
    }
}

pub const DEFAULT_THETA_TOL: f64 = 0.02;
pub const DEFAULT_R_REACH: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerParams {
    /// Slope of the saturated linear function (1/s).
    pub gamma: f64,
    /// Half-width of its linear zone (m).
    pub delta: f64,
    /// Desired bypass distance (m).
    pub d0: f64,
    pub d_safe: f64,
    /// Avoidance activation distance (m).
    pub d_av: f64,
    pub d_minus: f64,
    pub d_plus: f64,
    /// Bypass speed (m/s).
    pub v0: f64,
    /// Cruise speed (m/s).
    pub v_cr: f64,
    /// Speed profile knots: `v0` below `d0_upsilon`, `v_cr` above `d_cr`.
    pub d0_upsilon: f64,
    pub d_cr: f64,
    #[serde(default = "default_variant")]
    pub sign_variant: SignVariant,
    /// Heading tolerance for "headed for the target" (rad).
    #[serde(default = "default_theta_tol")]
    pub theta_tol: f64,
    #[serde(default = "default_r_reach")]
    pub r_reach: f64,
    /// Optional relay smoothing half-width; `None` is the ideal relay.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary_layer: Option<f64>,
}

fn default_variant() -> SignVariant {
    SignVariant::Normal
}
fn default_theta_tol() -> f64 {
    DEFAULT_THETA_TOL
}
fn default_r_reach() -> f64 {
    DEFAULT_R_REACH
}

impl ControllerParams {
    /// Saturation level `v_* = gamma * delta`.
    pub fn v_star(&self) -> f64 {
        self.gamma * self.delta
    }

    pub fn validate(&self, robot: &RobotParams) -> Result<(), ControllerError> {
        let fail = |msg: String| Err(ControllerError::InvalidParams(msg));
        let positive = [
            ("gamma", self.gamma),
            ("delta", self.delta),
            ("d_safe", self.d_safe),
            ("theta_tol", self.theta_tol),
            ("r_reach", self.r_reach),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return fail(format!("{name} > 0 violated ({name}={v})"));
            }
        }
        if !(self.d_safe < self.d_minus) {
            return fail(format!("d_safe < d_minus violated (d_safe={}, d_minus={})", self.d_safe, self.d_minus));
        }
        if !(self.d_minus < self.d0) {
            return fail(format!("d_minus < d0 violated (d_minus={}, d0={})", self.d_minus, self.d0));
        }
        if !(self.d0 < self.d_plus) {
            return fail(format!("d0 < d_plus violated (d0={}, d_plus={})", self.d0, self.d_plus));
        }
        if !(self.d_safe < self.d0) {
            return fail(format!("d_safe < d0 violated (d_safe={}, d0={})", self.d_safe, self.d0));
        }
        if !(self.d0 < self.d_av && self.d_av <= self.d0_upsilon) {
            return fail(format!(
                "d0 < d_av <= d0_upsilon violated (d0={}, d_av={}, d0_upsilon={})",
                self.d0, self.d_av, self.d0_upsilon
            ));
        }
        if !(self.d0_upsilon < self.d_cr) {
            return fail(format!("d0_upsilon < d_cr violated (d0_upsilon={}, d_cr={})", self.d0_upsilon, self.d_cr));
        }
        let vmax = robot.max_speed();
        if !(0.0 < self.v0 && self.v0 < self.v_cr && self.v_cr < vmax) {
            return fail(format!(
                "0 < v0 < v_cr < V violated (v0={}, v_cr={}, V={vmax})",
                self.v0, self.v_cr
            ));
        }
        if let Some(eps) = self.boundary_layer {
            if !(eps > 0.0) {
                return fail(format!("boundary_layer > 0 violated ({eps})"));
            }
        }
        Ok(())
    }

    /// Linear function with saturation.
    pub fn chi(&self, z: f64) -> f64 {
        if z.abs() <= self.delta {
            self.gamma * z
        } else {
            self.v_star() * z.signum()
        }
    }

    /// Speed profile: `v0` up to `d0_upsilon`, `v_cr` from `d_cr`, quintic
    /// smoothstep in between (C² at both knots).
    pub fn upsilon(&self, d: f64) -> f64 {
        if d <= self.d0_upsilon {
            return self.v0;
        }
        if d >= self.d_cr {
            return self.v_cr;
        }
        let x = (d - self.d0_upsilon) / (self.d_cr - self.d0_upsilon);
        let w = x * x * x * (10.0 + x * (-15.0 + 6.0 * x));
        self.v0 + (self.v_cr - self.v0) * w
    }

    /// Derivative of [`upsilon`](Self::upsilon) in `d`.
    pub fn upsilon_slope(&self, d: f64) -> f64 {
        if d <= self.d0_upsilon || d >= self.d_cr {
            return 0.0;
        }
        let span = self.d_cr - self.d0_upsilon;
        let x = (d - self.d0_upsilon) / span;
        (self.v_cr - self.v0) * 30.0 * x * x * (1.0 - x) * (1.0 - x) / span
    }

    /// Commanded speed for a reading; out of sensor range the cruise plateau applies.
    pub fn speed(&self, reading: &SensorReading) -> f64 {
        if reading.in_range {
            self.upsilon(reading.d)
        } else {
            self.v_cr
        }
    }

    /// Sliding variable `S = d_dot + chi(d - d0)`.
    pub fn surface(&self, reading: &SensorReading) -> f64 {
        reading.d_dot + self.chi(reading.d - self.d0)
    }

    fn relay(&self, s: f64) -> f64 {
        match self.boundary_layer {
            Some(eps) => (s / eps).clamp(-1.0, 1.0),
            // sgn(0) = 0
            None => {
                if s > 0.0 {
                    1.0
                } else if s < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Sliding-mode avoidance law.
    pub fn avoidance_law(&self, reading: &SensorReading, robot: &RobotParams) -> ControlInput {
        let v = self.speed(reading);
        let rate = (robot.max_speed() - v) / robot.half_axle;
        let u = self.sign_variant.factor() * rate * self.relay(self.surface(reading));
        ControlInput { v, u }
    }

    /// Straight-line motion towards the target.
    pub fn pursuit_law(&self, reading: &SensorReading) -> ControlInput {
        ControlInput { v: self.speed(reading), u: 0.0 }
    }

    /// Turning rate of the launching motion for this variant.
    pub fn launch_turn_rate(&self, robot: &RobotParams) -> f64 {
        -self.sign_variant.factor() * (robot.max_speed() - self.v0) / robot.half_axle
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModeKind {
    Pursuit,
    Avoidance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub kind: ModeKind,
    /// Time the mode was entered.
    pub since: f64,
}

impl Mode {
    pub fn pursuit(t: f64) -> Self {
        Self { kind: ModeKind::Pursuit, since: t }
    }
    pub fn avoidance(t: f64) -> Self {
        Self { kind: ModeKind::Avoidance, since: t }
    }
}

/// Applies the two switching predicates verbatim.
pub fn switch_mode(mode: Mode, reading: &SensorReading, state: &RobotState, params: &ControllerParams) -> Mode {
    match mode.kind {
        ModeKind::Pursuit => {
            if reading.in_range && reading.d <= params.d_av && params.surface(reading) <= 0.0 {
                Mode::avoidance(state.t)
            } else {
                mode
            }
        }
        ModeKind::Avoidance => {
            if !reading.in_range {
                return mode;
            }
            let h = reading.heading_vec();
            let misalignment = wrap_angle(state.theta - h.y.atan2(h.x));
            if misalignment.abs() <= params.theta_tol && params.surface(reading) >= 0.0 {
                Mode::pursuit(state.t)
            } else {
                mode
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ControllerEvent {
    ModeSwitch { from: ModeKind, to: ModeKind },
    /// Reading left sensor range during avoidance; last turn sign held.
    SensorLost,
}

/// Per-run controller state machine.
#[derive(Debug, Clone)]
pub struct Controller {
    pub params: ControllerParams,
    pub robot: RobotParams,
    mode: Mode,
    last_relay: f64,
    holding: bool,
}

impl Controller {
    pub fn new(params: ControllerParams, robot: RobotParams, t0: f64) -> Self {
        Self { params, robot, mode: Mode::pursuit(t0), last_relay: 0.0, holding: false }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// One control update: switch, then evaluate the active law.
    pub fn update(&mut self, reading: &SensorReading, state: &RobotState, events: &mut Vec<ControllerEvent>) -> ControlInput {
        let p = self.params;
        if self.mode.kind == ModeKind::Avoidance && !reading.in_range {
            if !self.holding {
                self.holding = true;
                events.push(ControllerEvent::SensorLost);
                let v = p.speed(reading);
                let rate = (self.robot.max_speed() - v) / self.robot.half_axle;
                return ControlInput { v, u: p.sign_variant.factor() * rate * self.last_relay };
            }
            self.holding = false;
            events.push(ControllerEvent::ModeSwitch { from: ModeKind::Avoidance, to: ModeKind::Pursuit });
            self.mode = Mode::pursuit(state.t);
            return p.pursuit_law(reading);
        }
        self.holding = false;
        let next = switch_mode(self.mode, reading, state, &p);
        if next.kind != self.mode.kind {
            events.push(ControllerEvent::ModeSwitch { from: self.mode.kind, to: next.kind });
        }
        self.mode = next;
        match self.mode.kind {
            ModeKind::Pursuit => p.pursuit_law(reading),
            ModeKind::Avoidance => {
                self.last_relay = p.relay(p.surface(reading));
                p.avoidance_law(reading, &self.robot)
            }
        }
    }
}
