//! Trace files and deterministic replay.
//!
//! Layout: `#` header lines (format tag, scenario hash, `dt`, column list,
//! termination, then the canonical scenario text on `#|` lines), one
//! fixed-width row per step, and `#event` lines. Floats carry 17
//! significant digits so rows parse back to the identical bits.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::controller::ModeKind;
use crate::obstacle::BoundaryKinematics;
use crate::robot::{ControlInput, RobotState};
use crate::scenario::Scenario;
use crate::sensing::SensorReading;
use crate::sim::{self, EventKind, Sample, SimError, Termination, Trace, TraceEvent};

pub const FORMAT_TAG: &str = "slidenav-trace 1";

pub const COLUMNS: [&str; 29] = [
    "t", "x", "y", "theta", "v", "u", "mode", "d", "d_dot", "S", "in_range", "hx", "hy", "s_star", "rx", "ry",
    "tx", "ty", "nx", "ny", "kappa", "v_n", "v_t", "a_n", "sigma", "xi", "s_dot", "mu", "tie",
];

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("cannot read trace: {0}")]
    Io(#[from] std::io::Error),
    #[error("trace line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

fn mode_code(m: ModeKind) -> u8 {
    match m {
        ModeKind::Pursuit => 0,
        ModeKind::Avoidance => 1,
    }
}

fn row_values(s: &Sample) -> [f64; 29] {
    let k = &s.kin;
    [
        s.state.t,
        s.state.x,
        s.state.y,
        s.state.theta,
        s.input.v,
        s.input.u,
        mode_code(s.mode) as f64,
        s.reading.d,
        s.reading.d_dot,
        s.surface,
        s.reading.in_range as u8 as f64,
        s.reading.heading[0],
        s.reading.heading[1],
        k.s_star,
        k.r_star[0],
        k.r_star[1],
        k.tangent[0],
        k.tangent[1],
        k.normal[0],
        k.normal[1],
        k.kappa,
        k.v_n,
        k.v_t,
        k.a_n,
        k.sigma,
        k.xi,
        k.s_dot,
        k.mu,
        s.tie as u8 as f64,
    ]
}

fn sample_from_row(v: &[f64; 29]) -> Result<Sample, String> {
    let flag = |x: f64, name: &str| match x {
        0.0 => Ok(false),
        1.0 => Ok(true),
        _ => Err(format!("column {name} must be 0 or 1, got {x}")),
    };
    let mode = if flag(v[6], "mode")? { ModeKind::Avoidance } else { ModeKind::Pursuit };
    Ok(Sample {
        state: RobotState { x: v[1], y: v[2], theta: v[3], t: v[0] },
        input: ControlInput { v: v[4], u: v[5] },
        mode,
        reading: SensorReading { d: v[7], d_dot: v[8], heading: [v[11], v[12]], in_range: flag(v[10], "in_range")? },
        surface: v[9],
        kin: BoundaryKinematics {
            s_star: v[13],
            r_star: [v[14], v[15]],
            tangent: [v[16], v[17]],
            normal: [v[18], v[19]],
            kappa: v[20],
            v_n: v[21],
            v_t: v[22],
            a_n: v[23],
            sigma: v[24],
            xi: v[25],
            s_dot: v[26],
            mu: v[27],
        },
        tie: flag(v[28], "tie")?,
    })
}

fn termination_text(t: &Termination) -> String {
    match *t {
        Termination::TargetReached { t } => format!("target_reached {t:?}"),
        Termination::Collision { t, d } => format!("collision {t:?} {d:?}"),
        Termination::HorizonExpired { t } => format!("horizon_expired {t:?}"),
        Termination::Stopped { t } => format!("stopped {t:?}"),
    }
}

fn parse_termination(text: &str) -> Result<Termination, String> {
    let parts: Vec<&str> = text.split_whitespace().collect();
    let num = |i: usize| -> Result<f64, String> {
        parts.get(i).ok_or("missing value")?.parse::<f64>().map_err(|e| e.to_string())
    };
    Ok(match parts.first().copied() {
        Some("target_reached") => Termination::TargetReached { t: num(1)? },
        Some("collision") => Termination::Collision { t: num(1)?, d: num(2)? },
        Some("horizon_expired") => Termination::HorizonExpired { t: num(1)? },
        Some("stopped") => Termination::Stopped { t: num(1)? },
        _ => return Err(format!("unknown termination '{text}'")),
    })
}

fn mode_name(m: ModeKind) -> &'static str {
    match m {
        ModeKind::Pursuit => "pursuit",
        ModeKind::Avoidance => "avoidance",
    }
}

fn parse_mode(s: &str) -> Result<ModeKind, String> {
    match s {
        "pursuit" => Ok(ModeKind::Pursuit),
        "avoidance" => Ok(ModeKind::Avoidance),
        _ => Err(format!("unknown mode '{s}'")),
    }
}

fn event_text(e: &TraceEvent) -> String {
    let kind = match e.kind {
        EventKind::ModeSwitch { from, to } => format!("mode_switch {} {}", mode_name(from), mode_name(to)),
        EventKind::RidgeTie => "ridge_tie".to_string(),
        EventKind::SensorLost => "sensor_lost".to_string(),
    };
    format!("#event {} {:?} {kind}", e.step, e.t)
}

fn parse_event(text: &str) -> Result<TraceEvent, String> {
    let parts: Vec<&str> = text.split_whitespace().collect();
    if parts.len() < 3 {
        return Err("event needs step, time and kind".into());
    }
    let step = parts[0].parse::<usize>().map_err(|e| e.to_string())?;
    let t = parts[1].parse::<f64>().map_err(|e| e.to_string())?;
    let kind = match (parts[2], parts.len()) {
        ("mode_switch", 5) => EventKind::ModeSwitch { from: parse_mode(parts[3])?, to: parse_mode(parts[4])? },
        ("ridge_tie", 3) => EventKind::RidgeTie,
        ("sensor_lost", 3) => EventKind::SensorLost,
        _ => return Err(format!("malformed event '{text}'")),
    };
    Ok(TraceEvent { step, t, kind })
}

/// Serializes a trace.
pub fn write_trace(trace: &Trace) -> String {
    let mut out = String::with_capacity(trace.samples.len() * 29 * 25 + 4096);
    let _ = writeln!(out, "# {FORMAT_TAG}");
    let _ = writeln!(out, "# scenario-hash {}", trace.scenario.hash());
    let _ = writeln!(out, "# dt {:?}", trace.dt);
    let _ = writeln!(out, "# columns {}", COLUMNS.join(" "));
    let _ = writeln!(out, "# termination {}", termination_text(&trace.termination));
    for line in trace.scenario.to_canonical_string().lines() {
        let _ = writeln!(out, "#| {line}");
    }
    for s in &trace.samples {
        let vals = row_values(s);
        for (i, v) in vals.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            if matches!(i, 6 | 10 | 28) {
                let _ = write!(out, "{:>1}", *v as u8);
            } else {
                let _ = write!(out, "{v:>24.16e}");
            }
        }
        out.push('\n');
    }
    for e in &trace.events {
        out.push_str(&event_text(e));
        out.push('\n');
    }
    out
}

/// The sample rows as CSV with the trace column names as header.
pub fn write_csv(trace: &Trace) -> String {
    let mut out = COLUMNS.join(",");
    out.push('\n');
    for s in &trace.samples {
        let row: Vec<String> = row_values(s).iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn save_trace(trace: &Trace, path: impl AsRef<Path>) -> Result<(), TraceError> {
    std::fs::write(path, write_trace(trace))?;
    Ok(())
}

/// Parses a trace, including the embedded scenario.
pub fn read_trace(text: &str) -> Result<Trace, TraceError> {
    let err = |line: usize, msg: String| TraceError::Parse { line, msg };
    let mut dt = None;
    let mut hash = None;
    let mut termination = None;
    let mut scenario_text = String::new();
    let mut samples = Vec::new();
    let mut events = Vec::new();
    let mut saw_tag = false;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_end();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("#|") {
            scenario_text.push_str(rest.strip_prefix(' ').unwrap_or(rest));
            scenario_text.push('\n');
        } else if let Some(rest) = line.strip_prefix("#event ") {
            events.push(parse_event(rest).map_err(|m| err(line_no, m))?);
        } else if let Some(rest) = line.strip_prefix("# ") {
            let (key, value) = rest.split_once(' ').unwrap_or((rest, ""));
            match key {
                "slidenav-trace" => {
                    if rest != FORMAT_TAG {
                        return Err(err(line_no, format!("unsupported format '{rest}'")));
                    }
                    saw_tag = true;
                }
                "scenario-hash" => hash = Some(value.to_string()),
                "dt" => dt = Some(value.parse::<f64>().map_err(|e| err(line_no, format!("dt: {e}")))?),
                "columns" => {
                    if value != COLUMNS.join(" ") {
                        return Err(err(line_no, "column list does not match this version".into()));
                    }
                }
                "termination" => termination = Some(parse_termination(value).map_err(|m| err(line_no, m))?),
                _ => return Err(err(line_no, format!("unknown header '{key}'"))),
            }
        } else {
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != COLUMNS.len() {
                return Err(err(line_no, format!("expected {} columns, found {}", COLUMNS.len(), fields.len())));
            }
            let mut vals = [0.0; 29];
            for (i, f) in fields.iter().enumerate() {
                vals[i] = f.parse::<f64>().map_err(|e| err(line_no, format!("column {}: {e}", COLUMNS[i])))?;
            }
            samples.push(sample_from_row(&vals).map_err(|m| err(line_no, m))?);
        }
    }
    if !saw_tag {
        return Err(err(1, format!("missing '# {FORMAT_TAG}' header")));
    }
    let dt = dt.ok_or_else(|| err(0, "missing dt header".into()))?;
    let termination = termination.ok_or_else(|| err(0, "missing termination header".into()))?;
    let scenario = Scenario::parse(&scenario_text).map_err(|e| err(0, format!("embedded scenario: {e}")))?;
    if hash.as_deref() != Some(scenario.hash().as_str()) {
        return Err(err(0, "scenario hash does not match the embedded scenario".into()));
    }
    for w in samples.windows(2) {
        if !(w[1].state.t > w[0].state.t) {
            return Err(err(0, format!("time not increasing at t={}", w[1].state.t)));
        }
    }
    if let Some(e) = events.iter().find(|e| e.step >= samples.len()) {
        return Err(err(0, format!("event at step {} beyond the last sample", e.step)));
    }
    Ok(Trace { scenario, dt, samples, events, termination })
}

pub fn load_trace(path: impl AsRef<Path>) -> Result<Trace, TraceError> {
    read_trace(&std::fs::read_to_string(path)?)
}

#[derive(Debug, Clone, PartialEq)]
pub enum ReplayVerdict {
    Match,
    Mismatch { step: usize, column: &'static str, recorded: f64, replayed: f64 },
    LengthMismatch { recorded: usize, replayed: usize },
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("dt mismatch: trace has {trace}, scenario has {scenario}")]
    DtMismatch { trace: f64, scenario: f64 },
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Re-runs `scenario` and compares every column bit for bit.
pub fn replay(trace: &Trace, scenario: &Scenario) -> Result<ReplayVerdict, ReplayError> {
    if trace.dt.to_bits() != scenario.run.dt.to_bits() {
        return Err(ReplayError::DtMismatch { trace: trace.dt, scenario: scenario.run.dt });
    }
    let fresh = sim::run(scenario)?.trace;
    for (step, (a, b)) in trace.samples.iter().zip(&fresh.samples).enumerate() {
        let (ra, rb) = (row_values(a), row_values(b));
        for i in 0..COLUMNS.len() {
            if ra[i].to_bits() != rb[i].to_bits() {
                return Ok(ReplayVerdict::Mismatch { step, column: COLUMNS[i], recorded: ra[i], replayed: rb[i] });
            }
        }
    }
    if trace.samples.len() != fresh.samples.len() {
        return Ok(ReplayVerdict::LengthMismatch { recorded: trace.samples.len(), replayed: fresh.samples.len() });
    }
    Ok(ReplayVerdict::Match)
}
