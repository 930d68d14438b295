//! Scenario files: a TOML document with `[robot]`, `[controller]`,
//! `[obstacle]`, `[sensor]`, `[initial]`, `[target]`, `[run]` and `[check]`
//! sections. Lengths are in metres, times in seconds, angles in radians.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::controller::ControllerParams;
use crate::obstacle::{BoundaryShape, ConfigurationMap, MapPrimitive, Obstacle};
use crate::robot::{wrap_angle, RobotParams, RobotState};
use crate::sensing::{self, SensingError};
use crate::Vec2;

/// Largest admissible integration step.
pub const MAX_DT: f64 = 0.01;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario: {0}")]
    Io(#[from] std::io::Error),
    #[error("scenario parse error: {0}")]
    Parse(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleSpec {
    pub boundary: BoundaryShape,
    /// Primitives of the configuration map, applied first to last.
    #[serde(default)]
    pub map: Vec<MapPrimitive>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorSpec {
    /// Readings farther than this are reported out of range.
    #[serde(default = "infinite")]
    pub range: f64,
}

impl Default for SensorSpec {
    fn default() -> Self {
        Self { range: f64::INFINITY }
    }
}

fn infinite() -> f64 {
    f64::INFINITY
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn vec(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }
}

/// How the controller obtains `d_dot`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DDotMode {
    /// Exact value from the boundary kinematics.
    #[default]
    Analytic,
    /// Backward difference of successive distance samples.
    Differenced,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub horizon: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub d_dot: DDotMode,
}

fn default_dt() -> f64 {
    1e-3
}

/// Settings of the feasibility checker.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckSpec {
    /// Boundary samples of the scan grid.
    #[serde(default = "default_grid_s")]
    pub grid_s: usize,
    /// Time spacing of the scan grid (s).
    #[serde(default = "default_grid_dt")]
    pub grid_dt: f64,
    /// Floor for the curvature-positivity margin.
    #[serde(default = "default_margin_floor")]
    pub margin_floor: f64,
    /// Hypothetical launches sampled in addition to those met in simulation.
    #[serde(default = "default_launch_samples")]
    pub launch_samples: usize,
}

fn default_grid_s() -> usize {
    360
}
fn default_grid_dt() -> f64 {
    0.05
}
fn default_margin_floor() -> f64 {
    0.05
}
fn default_launch_samples() -> usize {
    8
}

impl Default for CheckSpec {
    fn default() -> Self {
        Self {
            grid_s: default_grid_s(),
            grid_dt: default_grid_dt(),
            margin_floor: default_margin_floor(),
            launch_samples: default_launch_samples(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    pub robot: RobotParams,
    pub controller: ControllerParams,
    pub obstacle: ObstacleSpec,
    #[serde(default)]
    pub sensor: SensorSpec,
    pub initial: RobotState,
    pub target: Point,
    pub run: RunSpec,
    #[serde(default)]
    pub check: CheckSpec,
}

impl Scenario {
    /// Parses and validates a scenario document.
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let mut sc: Scenario = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        sc.initial.theta = wrap_angle(sc.initial.theta);
        sc.validate()?;
        Ok(sc)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Canonical text: parsing it back yields an identical scenario.
    pub fn to_canonical_string(&self) -> String {
        toml::to_string(self).expect("scenario fields are all representable in TOML")
    }

    /// First 16 hex digits of the SHA-256 of the canonical text.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_canonical_string().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn build_obstacle(&self) -> Result<Obstacle, ScenarioError> {
        Obstacle::from_shape(self.obstacle.boundary.clone(), ConfigurationMap::new(self.obstacle.map.clone()))
            .map_err(|e| ScenarioError::Invalid(format!("obstacle: {e}")))
    }

    pub fn target_vec(&self) -> Vec2 {
        self.target.vec()
    }

    /// Checks every field against the invariants of the module that owns it.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let invalid = |msg: String| Err(ScenarioError::Invalid(msg));
        self.robot.validate().map_err(|e| ScenarioError::Invalid(format!("robot: {e}")))?;
        self.controller
            .validate(&self.robot)
            .map_err(|e| ScenarioError::Invalid(format!("controller: {e}")))?;
        let run = &self.run;
        if !(run.dt > 0.0 && run.dt <= MAX_DT) {
            return invalid(format!("0 < dt <= {MAX_DT} violated (dt={})", run.dt));
        }
        if !(run.horizon.is_finite() && run.horizon > 0.0) {
            return invalid(format!("horizon > 0 violated (horizon={})", run.horizon));
        }
        if !(self.sensor.range > 0.0) {
            return invalid(format!("sensor range > 0 violated (range={})", self.sensor.range));
        }
        let c = &self.check;
        if c.grid_s < 8 || !(c.grid_dt > 0.0) || !(c.margin_floor >= 0.0) {
            return invalid("check: grid_s >= 8, grid_dt > 0, margin_floor >= 0 required".into());
        }
        let s = &self.initial;
        if ![s.x, s.y, s.theta, s.t].iter().all(|v| v.is_finite()) {
            return invalid("initial pose must be finite".into());
        }
        let obstacle = self.build_obstacle()?;
        obstacle
            .validate(s.t + run.horizon, 256, 65)
            .map_err(|e| ScenarioError::Invalid(format!("obstacle: {e}")))?;
        match sensing::contact(&obstacle, s.position(), s.t) {
            Ok(c) if c.distance > self.controller.d_safe => {}
            Ok(c) => {
                return invalid(format!(
                    "initial distance > d_safe violated (distance={}, d_safe={})",
                    c.distance, self.controller.d_safe
                ))
            }
            Err(SensingError::InsideObstacle { .. }) => return invalid("initial position lies inside the obstacle".into()),
            Err(e) => return invalid(format!("initial position: {e}")),
        }
        let target = self.target_vec();
        let n = ((run.horizon / 0.5).ceil() as usize).max(1);
        for j in 0..=n {
            let t = s.t + run.horizon * j as f64 / n as f64;
            if obstacle.contains(target, t) {
                return invalid(format!("target outside D(t) violated at t={t}"));
            }
        }
        Ok(())
    }

    /// Reflection across the x-axis with the opposite avoidance variant.
    pub fn mirrored(&self) -> Self {
        let mut m = self.clone();
        m.name = format!("{}-mirrored", self.name);
        m.obstacle.boundary = self.obstacle.boundary.mirrored();
        m.obstacle.map = self.obstacle.map.iter().map(|p| p.mirrored()).collect();
        m.initial = RobotState { x: self.initial.x, y: -self.initial.y, theta: wrap_angle(-self.initial.theta), t: self.initial.t };
        m.target = Point { x: self.target.x, y: -self.target.y };
        m.controller.sign_variant = self.controller.sign_variant.flipped();
        m
    }
}
