//! Fixed-step hybrid simulation.
//!
//! Each step runs in a fixed order: sense (nearest point, `d`, `d_dot`),
//! terminate on collision or arrival, switch mode, evaluate the active law,
//! record, integrate. Mode and control are held over the step.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::{Controller, ControllerEvent, ModeKind};
use crate::obstacle::{BoundaryKinematics, Obstacle};
use crate::robot::{self, ControlInput, RobotError, RobotState};
use crate::scenario::{DDotMode, Scenario, ScenarioError};
use crate::sensing::{self, Contact, SensingError, SensorReading};
use crate::Vec2;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("robot: {0}")]
    Robot(#[from] RobotError),
    #[error("sensing at t={t}: {source}")]
    Sensing { t: f64, source: SensingError },
}

/// One recorded step: the state at the start of the step and everything
/// the controller saw and did during it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub state: RobotState,
    pub input: ControlInput,
    pub mode: ModeKind,
    pub reading: SensorReading,
    /// Sliding variable `d_dot + chi(d - d0)`.
    pub surface: f64,
    pub kin: BoundaryKinematics,
    pub tie: bool,
}

impl Sample {
    pub fn t(&self) -> f64 {
        self.state.t
    }
    pub fn position(&self) -> Vec2 {
        self.state.position()
    }
    pub fn velocity(&self) -> Vec2 {
        self.state.velocity(self.input.v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    ModeSwitch { from: ModeKind, to: ModeKind },
    /// Two nearest points at equal distance; the smaller parameter was used.
    RidgeTie,
    /// The obstacle left sensor range during avoidance.
    SensorLost,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub step: usize,
    pub t: f64,
    pub kind: EventKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Termination {
    TargetReached { t: f64 },
    /// `d < d_safe`; `d` is negative when the robot ended up inside.
    Collision { t: f64, d: f64 },
    HorizonExpired { t: f64 },
    /// Open-loop recording stopped after the requested number of steps.
    Stopped { t: f64 },
}

impl Termination {
    pub fn t(&self) -> f64 {
        match *self {
            Termination::TargetReached { t }
            | Termination::Collision { t, .. }
            | Termination::HorizonExpired { t }
            | Termination::Stopped { t } => t,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub scenario: Scenario,
    pub dt: f64,
    pub samples: Vec<Sample>,
    pub events: Vec<TraceEvent>,
    pub termination: Termination,
}

impl Trace {
    pub fn min_distance(&self) -> f64 {
        self.samples.iter().map(|s| s.reading.d).fold(f64::INFINITY, f64::min)
    }

    /// Robot poses at which avoidance was engaged.
    pub fn launch_states(&self) -> Vec<RobotState> {
        self.events
            .iter()
            .filter(|e| matches!(e.kind, EventKind::ModeSwitch { to: ModeKind::Avoidance, .. }))
            .map(|e| self.samples[e.step].state)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub termination: Termination,
    pub trace: Trace,
}

impl RunOutcome {
    pub fn reached_target(&self) -> bool {
        matches!(self.termination, Termination::TargetReached { .. })
    }
}

/// Sensor model: nearest point, distance and its rate for a robot moving at
/// the commanded speed `Upsilon(d)` (or `v_cr` out of range).
pub struct Sensor<'a> {
    pub scenario: &'a Scenario,
    pub obstacle: &'a Obstacle,
    prev_d: Option<f64>,
}

pub struct Observation {
    pub contact: Contact,
    pub reading: SensorReading,
}

impl<'a> Sensor<'a> {
    pub fn new(scenario: &'a Scenario, obstacle: &'a Obstacle) -> Self {
        Self { scenario, obstacle, prev_d: None }
    }

    pub fn observe(&mut self, state: &RobotState) -> Result<Observation, SensingError> {
        let sc = self.scenario;
        let p = &sc.controller;
        let r = state.position();
        let contact = sensing::contact(self.obstacle, r, state.t)?;
        let d = contact.distance;
        let in_range = d <= sc.sensor.range;
        let to_target = sc.target_vec() - r;
        let heading = if to_target.norm() > 0.0 { to_target.normalize() } else { Vec2::zeros() };
        let v = if in_range { p.upsilon(d) } else { p.v_cr };
        let analytic = contact.distance_rate(state.velocity(v));
        let d_dot = match (sc.run.d_dot, self.prev_d) {
            (DDotMode::Differenced, Some(prev)) => (d - prev) / sc.run.dt,
            _ => analytic,
        };
        self.prev_d = Some(d);
        Ok(Observation { contact, reading: SensorReading { d, d_dot, heading: [heading.x, heading.y], in_range } })
    }
}

fn sample_from(obs: &Observation, state: RobotState, input: ControlInput, mode: ModeKind, scenario: &Scenario) -> Sample {
    Sample {
        state,
        input,
        mode,
        reading: obs.reading,
        surface: scenario.controller.surface(&obs.reading),
        kin: obs.contact.kinematics(state.velocity(input.v)),
        tie: obs.contact.tie,
    }
}

fn collision_depth(obstacle: &Obstacle, state: &RobotState) -> f64 {
    -sensing::project(obstacle, state.position(), state.t).distance
}

/// Runs the closed loop until arrival, collision or the horizon.
pub fn run(scenario: &Scenario) -> Result<RunOutcome, SimError> {
    scenario.validate()?;
    let obstacle = scenario.build_obstacle()?;
    let dt = scenario.run.dt;
    let t0 = scenario.initial.t;
    let n_steps = (scenario.run.horizon / dt).round() as usize;
    let mut controller = Controller::new(scenario.controller, scenario.robot, t0);
    let mut sensor = Sensor::new(scenario, &obstacle);
    let mut state = scenario.initial;
    let mut samples = Vec::with_capacity(n_steps + 1);
    let mut events = Vec::new();
    let mut ctl_events = Vec::new();
    let target = scenario.target_vec();
    let p = scenario.controller;

    let termination = 'outer: {
        for k in 0..=n_steps {
            let obs = match sensor.observe(&state) {
                Ok(obs) => obs,
                Err(SensingError::InsideObstacle { .. }) => {
                    break 'outer Termination::Collision { t: state.t, d: collision_depth(&obstacle, &state) };
                }
                Err(source) => return Err(SimError::Sensing { t: state.t, source }),
            };
            if obs.contact.tie {
                events.push(TraceEvent { step: k, t: state.t, kind: EventKind::RidgeTie });
            }
            let d = obs.reading.d;
            if d < p.d_safe {
                samples.push(sample_from(&obs, state, ControlInput::default(), controller.mode().kind, scenario));
                break 'outer Termination::Collision { t: state.t, d };
            }
            if (state.position() - target).norm() <= p.r_reach {
                samples.push(sample_from(&obs, state, ControlInput::default(), controller.mode().kind, scenario));
                break 'outer Termination::TargetReached { t: state.t };
            }
            if k == n_steps {
                samples.push(sample_from(&obs, state, ControlInput::default(), controller.mode().kind, scenario));
                break 'outer Termination::HorizonExpired { t: state.t };
            }
            ctl_events.clear();
            let input = controller.update(&obs.reading, &state, &mut ctl_events);
            for ev in &ctl_events {
                let kind = match *ev {
                    ControllerEvent::ModeSwitch { from, to } => EventKind::ModeSwitch { from, to },
                    ControllerEvent::SensorLost => EventKind::SensorLost,
                };
                events.push(TraceEvent { step: k, t: state.t, kind });
            }
            samples.push(sample_from(&obs, state, input, controller.mode().kind, scenario));
            state = robot::step_kinematics(state, input, dt, &scenario.robot)?;
            state.t = t0 + (k + 1) as f64 * dt;
        }
        unreachable!("the final step always terminates")
    };
    let trace = Trace { scenario: scenario.clone(), dt, samples, events, termination };
    Ok(RunOutcome { termination, trace })
}

/// Records `steps` steps under an arbitrary input policy (mode reported as
/// pursuit). Stops early on collision.
pub fn run_open_loop(
    scenario: &Scenario,
    steps: usize,
    mut policy: impl FnMut(&RobotState, &SensorReading) -> ControlInput,
) -> Result<Trace, SimError> {
    let obstacle = scenario.build_obstacle()?;
    let dt = scenario.run.dt;
    let t0 = scenario.initial.t;
    let mut sensor = Sensor::new(scenario, &obstacle);
    let mut state = scenario.initial;
    let mut samples = Vec::with_capacity(steps);
    let mut termination = Termination::Stopped { t: t0 + steps as f64 * dt };
    for k in 0..steps {
        let obs = match sensor.observe(&state) {
            Ok(obs) => obs,
            Err(SensingError::InsideObstacle { .. }) => {
                termination = Termination::Collision { t: state.t, d: collision_depth(&obstacle, &state) };
                break;
            }
            Err(source) => return Err(SimError::Sensing { t: state.t, source }),
        };
        let input = policy(&state, &obs.reading);
        let mut obs = obs;
        if scenario.run.d_dot == DDotMode::Analytic {
            // Record the rate for the speed actually commanded.
            obs.reading.d_dot = obs.contact.distance_rate(state.velocity(input.v));
        }
        samples.push(sample_from(&obs, state, input, ModeKind::Pursuit, scenario));
        state = robot::step_kinematics(state, input, dt, &scenario.robot)?;
        state.t = t0 + (k + 1) as f64 * dt;
    }
    Ok(Trace { scenario: scenario.clone(), dt, samples, events: Vec::new(), termination })
}
