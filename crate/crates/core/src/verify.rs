//! Trajectory-level checks on recorded traces: the avoidance guarantees
//! (safety, corridor, convergence, overtaking) and the kinematic identities
//! for `d_dot`, `d_ddot` and `s_dot`.
//!
//! Identity checks probe each step at its midpoint. The control is held over
//! a step, so a central difference over `[t_k, t_k + dt]` never straddles a
//! relay switch and needs no exclusion window.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::ModeKind;
use crate::obstacle::{BoundaryFields, BoundaryKinematics, Obstacle};
use crate::robot;
use crate::scenario::{DDotMode, ScenarioError};
use crate::sensing::{self, SensingError};
use crate::sim::Trace;
use crate::Vec2;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("sensing at t={t}: {source}")]
    Sensing { t: f64, source: SensingError },
}

/// Consecutive steps `|S|` must stay below the capture threshold.
pub const CAPTURE_PERSISTENCE: usize = 20;
/// Capture threshold in units of the chatter estimate.
pub const CAPTURE_FACTOR: f64 = 3.0;
pub const TOL_VELOCITY: f64 = 1e-4;
pub const TOL_SDOT: f64 = 1e-4;
pub const TOL_DDOT: f64 = 1e-3;
pub const TOL_VSQ: f64 = 1e-6;
pub const TOL_EXP_RATE: f64 = 0.1;
/// Fewest points accepted for the exponential fit.
pub const EXP_FIT_MIN_POINTS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpFit {
    pub rate: f64,
    pub gamma: f64,
    pub rel_error: f64,
    pub t_start: f64,
    pub t_end: f64,
    pub points: usize,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremVerdict {
    /// First avoidance engagement `[start, end)` in sample steps.
    pub engagement: (usize, usize),
    pub t_engage: f64,
    pub t_release: f64,
    pub capture_step: usize,
    pub t_capture: f64,
    /// Largest step-to-step change of `S`: the chatter estimate.
    pub chatter: f64,
    /// `max |d_ddot|` from second differences of `d`.
    pub k_ddot: f64,

    pub safety_ok: bool,
    pub min_d: f64,
    pub d_safe: f64,

    pub corridor_ok: bool,
    pub corridor_min: f64,
    pub corridor_max: f64,

    pub convergence_ok: bool,
    pub final_d_error: f64,
    pub final_d_dot: f64,
    pub tol_d_error: f64,
    pub tol_d_dot: f64,

    pub overtaking_ok: bool,
    /// Sign of `s_dot` over the final half after capture (0 if mixed).
    pub s_dot_sign: i8,
    pub s_dot_min: f64,
    pub s_dot_max: f64,

    /// `xi + V_T` keeps one strict sign while sliding.
    pub sliding_direction_ok: bool,
    pub xi_plus_vt_min: f64,
    pub xi_plus_vt_max: f64,
    pub max_abs_surface_after_capture: f64,
    pub exp_fit: Option<ExpFit>,

    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Verdict {
    Complete(Box<TheoremVerdict>),
    Inconclusive { reason: String },
}

impl Verdict {
    pub fn passed(&self) -> Option<bool> {
        match self {
            Verdict::Complete(v) => Some(v.pass),
            Verdict::Inconclusive { .. } => None,
        }
    }
}

fn first_engagement(trace: &Trace) -> Option<(usize, usize)> {
    let modes: Vec<ModeKind> = trace.samples.iter().map(|s| s.mode).collect();
    let a = modes.iter().position(|&m| m == ModeKind::Avoidance)?;
    let b = modes[a..].iter().position(|&m| m != ModeKind::Avoidance).map_or(modes.len(), |j| a + j);
    Some((a, b))
}

/// Checks the four guarantees on the first avoidance engagement.
pub fn verify_theorem(trace: &Trace) -> Verdict {
    let Some((a, b)) = first_engagement(trace) else {
        return Verdict::Inconclusive { reason: "no avoidance engagement in the trace".into() };
    };
    let p = &trace.scenario.controller;
    let dt = trace.dt;
    let seg = &trace.samples[a..b];
    if seg.len() < CAPTURE_PERSISTENCE + 2 {
        return Verdict::Inconclusive { reason: format!("engagement too short ({} samples)", seg.len()) };
    }
    let d: Vec<f64> = seg.iter().map(|s| s.reading.d).collect();
    let surf: Vec<f64> = seg.iter().map(|s| s.surface).collect();

    let k_ddot = d.windows(3).map(|w| ((w[0] - 2.0 * w[1] + w[2]) / (dt * dt)).abs()).fold(0.0, f64::max);
    let chatter = seg
        .windows(2)
        .filter(|w| !w[0].tie && !w[1].tie)
        .map(|w| (w[1].surface - w[0].surface).abs())
        .fold(0.0, f64::max);
    let threshold = CAPTURE_FACTOR * chatter;
    let mut run = 0;
    let mut capture = None;
    for (i, s) in surf.iter().enumerate() {
        if s.abs() <= threshold {
            run += 1;
            if run == CAPTURE_PERSISTENCE {
                capture = Some(i + 1 - CAPTURE_PERSISTENCE);
                break;
            }
        } else {
            run = 0;
        }
    }
    let Some(c) = capture else {
        return Verdict::Inconclusive { reason: "trace ends before surface capture".into() };
    };

    let min_d = d.iter().copied().fold(f64::INFINITY, f64::min);
    let safety_ok = min_d >= p.d_safe;

    let after = &d[c..];
    let corridor_min = after.iter().copied().fold(f64::INFINITY, f64::min);
    let corridor_max = after.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let corridor_ok = corridor_min >= p.d_minus && corridor_max <= p.d_plus;

    // The last sample of a terminated run carries a zero control; use the
    // last controlled one.
    let last = (c..seg.len()).rev().find(|&i| seg[i].input.v != 0.0).unwrap_or(seg.len() - 1);
    let final_d_error = (d[last] - p.d0).abs();
    let final_d_dot = seg[last].reading.d_dot;
    let tol_d_error = (0.02 * p.d0).max(2.0 * k_ddot * dt);
    let tol_d_dot = 2.0 * p.v_star() * 0.05;
    let convergence_ok = final_d_error <= tol_d_error && final_d_dot.abs() <= tol_d_dot;

    let half = c + (last + 1 - c) / 2;
    let sd: Vec<f64> = seg[half..=last].iter().map(|s| s.kin.s_dot).collect();
    let s_dot_min = sd.iter().copied().fold(f64::INFINITY, f64::min);
    let s_dot_max = sd.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let s_dot_sign = if s_dot_min > 0.0 {
        1
    } else if s_dot_max < 0.0 {
        -1
    } else {
        0
    };
    let overtaking_ok = s_dot_sign != 0;

    let xv: Vec<f64> = seg[c..=last].iter().map(|s| s.kin.xi + s.kin.v_t).collect();
    let xi_plus_vt_min = xv.iter().copied().fold(f64::INFINITY, f64::min);
    let xi_plus_vt_max = xv.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sliding_direction_ok = xi_plus_vt_min > 0.0 || xi_plus_vt_max < 0.0;
    let max_abs_surface_after_capture = surf[c..=last].iter().fold(0.0f64, |m, s| m.max(s.abs()));

    let exp_fit = fit_exponential(trace, a + c, a + last + 1, chatter);

    let pass = safety_ok && corridor_ok && convergence_ok && overtaking_ok;
    Verdict::Complete(Box::new(TheoremVerdict {
        engagement: (a, b),
        t_engage: seg[0].t(),
        t_release: seg[seg.len() - 1].t(),
        capture_step: a + c,
        t_capture: seg[c].t(),
        chatter,
        k_ddot,
        safety_ok,
        min_d,
        d_safe: p.d_safe,
        corridor_ok,
        corridor_min,
        corridor_max,
        convergence_ok,
        final_d_error,
        final_d_dot,
        tol_d_error,
        tol_d_dot,
        overtaking_ok,
        s_dot_sign,
        s_dot_min,
        s_dot_max,
        sliding_direction_ok,
        xi_plus_vt_min,
        xi_plus_vt_max,
        max_abs_surface_after_capture,
        exp_fit,
        pass,
    }))
}

/// Least-squares fit of `log|d - d0|` over the longest stretch in the
/// unsaturated zone `|d - d0| <= delta` that stays well above the chatter
/// floor.
pub fn fit_exponential(trace: &Trace, from: usize, to: usize, chatter: f64) -> Option<ExpFit> {
    let p = &trace.scenario.controller;
    let floor = (10.0 * chatter / p.gamma).max(1e-12);
    let ok = |i: usize| {
        let y = trace.samples[i].reading.d - p.d0;
        y.abs() <= p.delta && y.abs() >= floor
    };
    let mut best = (0, 0);
    let mut i = from;
    while i < to {
        if ok(i) {
            let sign = (trace.samples[i].reading.d - p.d0).signum();
            let mut j = i;
            while j < to && ok(j) && (trace.samples[j].reading.d - p.d0).signum() == sign {
                j += 1;
            }
            if j - i > best.1 - best.0 {
                best = (i, j);
            }
            i = j;
        } else {
            i += 1;
        }
    }
    let (i0, i1) = best;
    let n = i1 - i0;
    if n < EXP_FIT_MIN_POINTS {
        return None;
    }
    let pts: Vec<(f64, f64)> =
        trace.samples[i0..i1].iter().map(|s| (s.t(), (s.reading.d - p.d0).abs().ln())).collect();
    let nf = n as f64;
    let mt = pts.iter().map(|q| q.0).sum::<f64>() / nf;
    let my = pts.iter().map(|q| q.1).sum::<f64>() / nf;
    let sxy: f64 = pts.iter().map(|q| (q.0 - mt) * (q.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|q| (q.0 - mt).powi(2)).sum();
    let rate = -sxy / sxx;
    let rel_error = (rate - p.gamma).abs() / p.gamma;
    Some(ExpFit {
        rate,
        gamma: p.gamma,
        rel_error,
        t_start: pts[0].0,
        t_end: pts[n - 1].0,
        points: n,
        pass: rel_error <= TOL_EXP_RATE,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    pub name: String,
    /// `(step, residual)` for every evaluated step.
    #[serde(skip)]
    pub series: Vec<(usize, f64)>,
    pub max: f64,
    pub argmax: Option<usize>,
    pub evaluated: usize,
    /// Steps skipped: ridge ties, nearest-point jumps, stopped robot.
    pub excluded: usize,
    pub tolerance: f64,
    pub pass: bool,
}

impl Residuals {
    fn new(name: &str, series: Vec<(usize, f64)>, excluded: usize, tolerance: f64) -> Self {
        let (argmax, max) = series
            .iter()
            .fold((None, 0.0f64), |(am, m), &(k, r)| if r > m || am.is_none() { (Some(k), r.max(m)) } else { (am, m) });
        Self {
            name: name.into(),
            evaluated: series.len(),
            pass: series.iter().all(|&(_, r)| r.is_finite() && r <= tolerance),
            series,
            max,
            argmax,
            excluded,
            tolerance,
        }
    }
}

/// Quantities at the midpoint of step `k`, plus the recorded endpoints.
#[derive(Debug, Clone, Copy)]
struct StepProbe {
    step: usize,
    dt: f64,
    v: f64,
    u: f64,
    d0: f64,
    d1: f64,
    /// Arc length travelled by the nearest point relative to the material
    /// boundary over the step.
    ds_arc: f64,
    d_mid: f64,
    velocity_mid: Vec2,
    fields: BoundaryFields,
    kin: BoundaryKinematics,
}

fn wrap_unit(x: f64) -> f64 {
    (x + 0.5).rem_euclid(1.0) - 0.5
}

fn probes(trace: &Trace) -> Result<(Vec<StepProbe>, usize), VerifyError> {
    let obstacle: Obstacle = trace.scenario.build_obstacle()?;
    let dt = trace.dt;
    let n = trace.samples.len();
    if n < 2 {
        return Ok((Vec::new(), 0));
    }
    let out: Vec<Result<Option<StepProbe>, VerifyError>> = (0..n - 1)
        .into_par_iter()
        .map(|k| {
            let (a, b) = (&trace.samples[k], &trace.samples[k + 1]);
            if a.tie || b.tie || a.input.v == 0.0 {
                return Ok(None);
            }
            let mid = robot::advance(a.state, a.input, 0.5 * dt);
            let contact = sensing::contact(&obstacle, mid.position(), mid.t)
                .map_err(|source| VerifyError::Sensing { t: mid.t, source })?;
            if contact.tie {
                return Ok(None);
            }
            let velocity_mid = mid.velocity(a.input.v);
            let fields = contact.fields;
            let ds_arc = fields.ds.norm() * wrap_unit(b.kin.s_star - a.kin.s_star);
            // A jump to another branch of the nearest-point map.
            let bound = 10.0 * (a.input.v + fields.speed() + 1e-3) * dt / (1.0 + fields.kappa * contact.distance).max(1e-3);
            if ds_arc.abs() > bound {
                return Ok(None);
            }
            Ok(Some(StepProbe {
                step: k,
                dt,
                v: a.input.v,
                u: a.input.u,
                d0: a.reading.d,
                d1: b.reading.d,
                ds_arc,
                d_mid: contact.distance,
                velocity_mid,
                kin: BoundaryKinematics::from_fields(&fields, contact.distance, velocity_mid),
                fields,
            }))
        })
        .collect();
    let mut probes = Vec::with_capacity(out.len());
    let mut excluded = 0;
    for r in out {
        match r? {
            Some(p) => probes.push(p),
            None => excluded += 1,
        }
    }
    Ok((probes, excluded))
}

fn velocity_residual(p: &StepProbe) -> f64 {
    let f = &p.fields;
    let s_dot = p.ds_arc / p.dt;
    let xi = s_dot + p.d_mid * (f.sigma + f.kappa * s_dot);
    let d_dot = (p.d1 - p.d0) / p.dt;
    let rebuilt = f.tangent * xi + f.velocity - f.normal * d_dot;
    (p.velocity_mid - rebuilt).norm() / p.v
}

fn sdot_residual(p: &StepProbe) -> f64 {
    let k = &p.kin;
    let formula = (k.xi - p.d_mid * k.sigma) / (1.0 + k.kappa * p.d_mid);
    (p.ds_arc / p.dt - formula).abs() / p.v
}

fn ddot_residual(p: &StepProbe, d_mid_recomputed: f64) -> f64 {
    let k = &p.kin;
    let h = 0.5 * p.dt;
    let fd = (p.d0 - 2.0 * d_mid_recomputed + p.d1) / (h * h);
    let (xi, d) = (k.xi, p.d_mid);
    let rhs = -p.u * (xi + k.v_t)
        + k.a_n
        + (2.0 * k.sigma * xi + k.kappa * xi * xi - d * k.sigma * k.sigma) / (1.0 + k.kappa * d);
    (fd - rhs).abs()
}

/// `|v - (xi T + V - d_dot N)| / v` with `xi = s_dot + d mu` and `s_dot`,
/// `d_dot` finite-differenced over each step.
pub fn check_velocity_decomposition(trace: &Trace) -> Result<Residuals, VerifyError> {
    let (ps, excluded) = probes(trace)?;
    Ok(Residuals::new("velocity decomposition", ps.iter().map(|p| (p.step, velocity_residual(p))).collect(), excluded, TOL_VELOCITY))
}

/// Second central difference of `d` against the closed-form `d_ddot`
/// (the held speed makes the `v_dot` term vanish).
pub fn check_ddot_formula(trace: &Trace) -> Result<Residuals, VerifyError> {
    let (ps, excluded) = probes(trace)?;
    Ok(Residuals::new("d_ddot formula", ps.iter().map(|p| (p.step, ddot_residual(p, p.d_mid))).collect(), excluded, TOL_DDOT))
}

/// Finite-differenced arc-rate of the nearest point against
/// `(xi - d sigma)/(1 + kappa d)`, relative to `v`.
pub fn check_sdot_formula(trace: &Trace) -> Result<Residuals, VerifyError> {
    let (ps, excluded) = probes(trace)?;
    Ok(Residuals::new("s_dot formula", ps.iter().map(|p| (p.step, sdot_residual(p))).collect(), excluded, TOL_SDOT))
}

/// `|(xi + V_T)² + (V_N - d_dot)² - v²| / v²` on recorded samples. Needs
/// analytic `d_dot`.
pub fn check_speed_identity(trace: &Trace) -> Residuals {
    if trace.scenario.run.d_dot != DDotMode::Analytic {
        return Residuals::new("speed identity", Vec::new(), trace.samples.len(), TOL_VSQ);
    }
    let mut excluded = 0;
    let series = trace
        .samples
        .iter()
        .enumerate()
        .filter_map(|(k, s)| {
            let v = s.input.v;
            if v == 0.0 {
                excluded += 1;
                return None;
            }
            let kin = &s.kin;
            let r = ((kin.xi + kin.v_t).powi(2) + (kin.v_n - s.reading.d_dot).powi(2) - v * v).abs() / (v * v);
            Some((k, r))
        })
        .collect();
    Residuals::new("speed identity", series, excluded, TOL_VSQ)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub scenario: String,
    pub verdict: Verdict,
    pub velocity: Residuals,
    pub ddot: Residuals,
    pub sdot: Residuals,
    pub speed: Residuals,
    pub identities_ok: bool,
}

/// Verdict plus every identity check, sharing one pass of midpoint probes.
pub fn verify_trace(trace: &Trace) -> Result<VerifyReport, VerifyError> {
    let (ps, excluded) = probes(trace)?;
    let velocity = Residuals::new("velocity decomposition", ps.iter().map(|p| (p.step, velocity_residual(p))).collect(), excluded, TOL_VELOCITY);
    let ddot = Residuals::new("d_ddot formula", ps.iter().map(|p| (p.step, ddot_residual(p, p.d_mid))).collect(), excluded, TOL_DDOT);
    let sdot = Residuals::new("s_dot formula", ps.iter().map(|p| (p.step, sdot_residual(p))).collect(), excluded, TOL_SDOT);
    let speed = check_speed_identity(trace);
    let identities_ok = velocity.pass && ddot.pass && sdot.pass && speed.pass;
    Ok(VerifyReport { scenario: trace.scenario.name.clone(), verdict: verify_theorem(trace), velocity, ddot, sdot, speed, identities_ok })
}
