//! Grid-scan checkers for the obstacle assumptions behind the avoidance
//! guarantee, and the gain-tuning rules that depend on them.
//!
//! Every check scans boundary samples `s` over time samples `t` (a single
//! time for static obstacles), with both signs of the tangential speed
//! branch. Infinite-horizon statements are approximated by the scenario
//! horizon.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::ControllerParams;
use crate::obstacle::{BoundaryFields, BoundaryKinematics, Obstacle, ObstacleError};
use crate::robot::{self, wrap_angle, ControlInput, RobotParams, RobotState};
use crate::scenario::Scenario;
use crate::sensing::{self, SensingError};
use crate::Vec2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeasibilityError {
    #[error("domain error: {0}")]
    Domain(String),
}

/// Boundary quantities entering the feasibility inequalities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalKinematics {
    pub kappa: f64,
    pub v_n: f64,
    pub v_t: f64,
    pub a_n: f64,
    pub sigma: f64,
}

impl From<&BoundaryFields> for LocalKinematics {
    fn from(f: &BoundaryFields) -> Self {
        Self { kappa: f.kappa, v_n: f.v_n(), v_t: f.v_t(), a_n: f.a_n(), sigma: f.sigma }
    }
}

impl From<&BoundaryKinematics> for LocalKinematics {
    fn from(k: &BoundaryKinematics) -> Self {
        Self { kappa: k.kappa, v_n: k.v_n, v_t: k.v_t, a_n: k.a_n, sigma: k.sigma }
    }
}

fn branch_sign(sign: f64) -> f64 {
    if sign < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// `xi = -V_T ± sqrt(v² - (V_N + z)²)` and the bracketed acceleration term
/// `A_N + (2 sigma xi + kappa xi² - d sigma²)/(1 + kappa d)`, together with
/// the square root.
fn shifted_terms(k: &LocalKinematics, d: f64, v: f64, z: f64, sign: f64) -> Result<(f64, f64, f64), FeasibilityError> {
    let w = k.v_n + z;
    let rad = v * v - w * w;
    if !(rad > 0.0) {
        return Err(FeasibilityError::Domain(format!("v² <= (V_N + z)² (v={v}, V_N={}, z={z})", k.v_n)));
    }
    let denom = 1.0 + k.kappa * d;
    if !(denom > 0.0) {
        return Err(FeasibilityError::Domain(format!("1 + kappa*d <= 0 (kappa={}, d={d})", k.kappa)));
    }
    let root = rad.sqrt();
    let xi = -k.v_t + branch_sign(sign) * root;
    let a = k.a_n + (2.0 * k.sigma * xi + k.kappa * xi * xi - d * k.sigma * k.sigma) / denom;
    Ok((xi, a, root))
}

/// `(xi, A)` at distance `d` and speed `v` for the chosen sign branch.
pub fn lemma2_quantities(kin: &BoundaryKinematics, d: f64, v: f64, sign: f64) -> Result<(f64, f64), FeasibilityError> {
    let (xi, a, _) = shifted_terms(&kin.into(), d, v, 0.0, sign)?;
    Ok((xi, a))
}

/// Left side of the acceleration inequality: `|A| L / sqrt(v² - V_N²) + v`.
pub fn acceleration_lhs(k: &LocalKinematics, d: f64, v: f64, sign: f64, half_axle: f64) -> Result<f64, FeasibilityError> {
    omega_value(k, d, v, 0.0, sign, half_axle)
}

/// `Omega(r_*, t, d, z)` for the chosen sign branch.
pub fn omega_value(k: &LocalKinematics, d: f64, v: f64, z: f64, sign: f64, half_axle: f64) -> Result<f64, FeasibilityError> {
    let (_, a, root) = shifted_terms(k, d, v, z, sign)?;
    Ok(half_axle * (a / root).abs() + v)
}

/// `Omega` at the nearest-point fields of `obstacle` at `(s, t)`.
#[allow(clippy::too_many_arguments)]
pub fn omega_margin(
    obstacle: &Obstacle,
    s: f64,
    t: f64,
    v0: f64,
    d: f64,
    z: f64,
    sign: f64,
    robot: &RobotParams,
) -> Result<f64, FeasibilityError> {
    let fields = obstacle.fields(s, t).map_err(|e| FeasibilityError::Domain(e.to_string()))?;
    omega_value(&(&fields).into(), d, v0, z, sign, robot.half_axle)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub s: f64,
    pub t: f64,
    pub d: f64,
    pub sign: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub s: f64,
    pub t: f64,
    pub local: LocalKinematics,
}

/// Sample times of the scan: one for static obstacles, otherwise every
/// `grid_dt` over `[t0, t0 + horizon]`.
pub fn grid_times(obstacle: &Obstacle, t0: f64, horizon: f64, grid_dt: f64) -> Vec<f64> {
    if obstacle.is_static() {
        return vec![t0];
    }
    let n = (horizon / grid_dt).ceil() as usize;
    (0..=n).map(|k| t0 + (k as f64 * grid_dt).min(horizon)).collect()
}

/// Boundary fields on the `(s, t)` grid.
pub fn field_table(obstacle: &Obstacle, n_s: usize, times: &[f64]) -> Result<Vec<Cell>, ObstacleError> {
    times
        .par_iter()
        .flat_map_iter(|&t| {
            (0..n_s).map(move |i| {
                let s = i as f64 / n_s as f64;
                obstacle.fields(s, t).map(|f| Cell { s, t, local: (&f).into() })
            })
        })
        .collect()
}

fn min_by_value<T: Copy>(items: impl Iterator<Item = (f64, T)>) -> Option<(f64, T)> {
    items.fold(None, |best: Option<(f64, T)>, (v, x)| match best {
        Some((bv, _)) if bv <= v => best,
        _ => Some((v, x)),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureReport {
    /// `min(1, min over kappa < 0 of 1 + d_plus kappa)`.
    pub margin: f64,
    pub margin_floor: f64,
    pub worst: Option<GridPoint>,
    pub pass: bool,
}

pub const CURVATURE_INEQUALITY: &str = "curvature positivity: 1 + d_plus*kappa > margin_floor on concave arcs";
pub const NORMAL_INEQUALITY: &str = "normal velocity bound: |V_N| <= lambda_v*v0 with lambda_v < 1";
pub const ACCELERATION_INEQUALITY: &str =
    "acceleration bound: |A|*L/sqrt(v0^2 - V_N^2) + v0 <= lambda_a*V with lambda_a < 1";
pub const TANGENTIAL_INEQUALITY: &str = "tangential bound: sqrt(v0^2 - V_N^2) >= |V_T + d*sigma| + eps_v with eps_v > 0";
pub const OMEGA_INEQUALITY: &str = "Omega(z) < (lambda_a + eta_a)*V for all |z| <= z_star with z_star > 0";
pub const GAIN_INEQUALITY_1: &str = "gain bound: v_star = gamma*delta <= min(eta_v*v0, z_star)";
pub const GAIN_INEQUALITY_2: &str =
    "gain bound: (lambda_a + eta_a) + gamma*L*v_star/(v0*(V - v0)*sqrt(1 - (lambda_v + eta_v)^2)) < 1";
pub const LAUNCH_CORRIDOR: &str = "launching motion: d in [d_minus, d_plus] during the first 1.5 turns";
pub const LAUNCH_ROTATION: &str = "launching motion: rotation alpha <= (t_star - tau_turn)*(V - v0)/L for some t_star";

/// Curvature positivity over the corridor, checked at its outer edge.
pub fn check_assumption3(cells: &[Cell], d_plus: f64, margin_floor: f64) -> CurvatureReport {
    let worst = min_by_value(
        cells
            .iter()
            .filter(|c| c.local.kappa < 0.0)
            .map(|c| (1.0 + d_plus * c.local.kappa, GridPoint { s: c.s, t: c.t, d: d_plus, sign: 0.0 })),
    );
    let margin = worst.map_or(1.0, |(m, _)| m.min(1.0));
    CurvatureReport { margin, margin_floor, worst: worst.map(|(_, p)| p), pass: margin > margin_floor }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub name: String,
    /// Smallest slack over the grid; negative means violated.
    pub worst_slack: f64,
    pub worst: Option<GridPoint>,
    pub pass: bool,
    /// Up to a few violating grid points.
    pub violations: Vec<GridPoint>,
}

const MAX_LISTED: usize = 10;

/// Margins found by the scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionMargins {
    pub lambda_v: f64,
    pub lambda_a: f64,
    pub eps_v: f64,
    pub eta_v: f64,
    pub eta_a: f64,
    pub z_star: f64,
    pub normal: InequalityReport,
    pub acceleration: InequalityReport,
    pub tangential: InequalityReport,
    pub pass: bool,
}

impl AssumptionMargins {
    /// Both `lambda + eta < 1` conditions with positive `eta`.
    pub fn headroom_valid(&self) -> bool {
        self.eta_v > 0.0 && self.eta_a > 0.0 && self.lambda_v + self.eta_v < 1.0 && self.lambda_a + self.eta_a < 1.0
    }
}

const SIGNS: [f64; 2] = [1.0, -1.0];

/// Smallest feasible `lambda_v`, `lambda_a`, largest `eps_v`, and
/// `eta = (1 - lambda)/2`. The acceleration and tangential inequalities are
/// checked at both corridor edges, which suffices because both sides are
/// monotone in `d` between them.
pub fn check_assumption4(cells: &[Cell], v0: f64, d_range: (f64, f64), robot: &RobotParams) -> AssumptionMargins {
    let vmax = robot.max_speed();
    let ds = [d_range.0, d_range.1];

    // |V_N| <= lambda_v v0
    let mut normal_viol = Vec::new();
    let mut max_vn = (0.0f64, None);
    for c in cells {
        let vn = c.local.v_n.abs();
        let p = GridPoint { s: c.s, t: c.t, d: f64::NAN, sign: 0.0 };
        if vn >= v0 && normal_viol.len() < MAX_LISTED {
            normal_viol.push(p);
        }
        if vn > max_vn.0 || max_vn.1.is_none() {
            max_vn = (vn, Some(p));
        }
    }
    let lambda_v = (max_vn.0 / v0).max(1e-9);
    let normal = InequalityReport {
        name: NORMAL_INEQUALITY.into(),
        worst_slack: v0 - max_vn.0,
        worst: max_vn.1,
        pass: lambda_v < 1.0,
        violations: normal_viol,
    };

    let mut acc_viol = Vec::new();
    let mut tan_viol = Vec::new();
    let mut max_lhs: (f64, Option<GridPoint>) = (f64::NEG_INFINITY, None);
    let mut min_tan: (f64, Option<GridPoint>) = (f64::INFINITY, None);
    let mut domain_failure = false;
    for c in cells {
        for &d in &ds {
            let k = &c.local;
            let rad = v0 * v0 - k.v_n * k.v_n;
            let p0 = GridPoint { s: c.s, t: c.t, d, sign: 0.0 };
            let tan_slack = if rad > 0.0 { rad.sqrt() - (k.v_t + d * k.sigma).abs() } else { f64::NEG_INFINITY };
            if tan_slack < min_tan.0 || min_tan.1.is_none() {
                min_tan = (tan_slack, Some(p0));
            }
            if !(tan_slack > 0.0) && tan_viol.len() < MAX_LISTED {
                tan_viol.push(p0);
            }
            for &sign in &SIGNS {
                let p = GridPoint { sign, ..p0 };
                match acceleration_lhs(k, d, v0, sign, robot.half_axle) {
                    Ok(lhs) => {
                        if lhs > max_lhs.0 {
                            max_lhs = (lhs, Some(p));
                        }
                        if lhs >= vmax && acc_viol.len() < MAX_LISTED {
                            acc_viol.push(p);
                        }
                    }
                    Err(_) => {
                        domain_failure = true;
                        if acc_viol.len() < MAX_LISTED {
                            acc_viol.push(p);
                        }
                        if max_lhs.0 < f64::INFINITY {
                            max_lhs = (f64::INFINITY, Some(p));
                        }
                    }
                }
            }
        }
    }
    let lambda_a = max_lhs.0 / vmax;
    let acceleration = InequalityReport {
        name: ACCELERATION_INEQUALITY.into(),
        worst_slack: vmax - max_lhs.0,
        worst: max_lhs.1,
        pass: !domain_failure && lambda_a < 1.0,
        violations: acc_viol,
    };
    let eps_v = min_tan.0;
    let tangential = InequalityReport {
        name: TANGENTIAL_INEQUALITY.into(),
        worst_slack: eps_v,
        worst: min_tan.1,
        pass: eps_v > 0.0,
        violations: tan_viol,
    };
    let eta = |lambda: f64| if lambda < 1.0 { 0.5 * (1.0 - lambda) } else { 0.0 };
    let pass = normal.pass && acceleration.pass && tangential.pass;
    AssumptionMargins {
        lambda_v,
        lambda_a,
        eps_v,
        eta_v: eta(lambda_v),
        eta_a: eta(lambda_a),
        z_star: 0.0,
        normal,
        acceleration,
        tangential,
        pass,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZStarReport {
    pub z_star: f64,
    /// `v0 - max |V_N|`: beyond it `Omega` is undefined.
    pub cap: f64,
    pub bound: f64,
    pub resolution: f64,
    /// Cell that limits `z_star`.
    pub limiting: Option<GridPoint>,
    pub pass: bool,
}

/// Coarse steps per cell before bisection.
const Z_SCAN_STEPS: usize = 32;

/// Largest `z` such that `Omega < bound` holds for every `|z'| <= z` in the
/// cell, searched by a coarse scan followed by bisection.
fn cell_z_limit(k: &LocalKinematics, ctx: &ZContext, upto: f64) -> f64 {
    let ok = |z: f64| {
        ctx.ds.iter().all(|&d| {
            SIGNS.iter().all(|&sign| {
                [z, -z].iter().all(|&zz| {
                    omega_value(k, d, ctx.v0, zz, sign, ctx.half_axle).is_ok_and(|w| w < ctx.bound)
                })
            })
        })
    };
    if !ok(0.0) {
        return 0.0;
    }
    let step = ctx.cap / Z_SCAN_STEPS as f64;
    let mut lo = 0.0;
    for j in 1..=Z_SCAN_STEPS {
        let z = step * j as f64;
        if lo >= upto {
            return lo;
        }
        if !ok(z) {
            let mut hi = z;
            while hi - lo > ctx.resolution {
                let mid = 0.5 * (lo + hi);
                if ok(mid) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            return lo;
        }
        lo = z;
    }
    lo
}

struct ZContext {
    v0: f64,
    ds: [f64; 2],
    half_axle: f64,
    bound: f64,
    cap: f64,
    resolution: f64,
}

/// `z_star` with bisection resolution `1e-4 v0`.
pub fn find_z_star(
    cells: &[Cell],
    v0: f64,
    d_range: (f64, f64),
    eta_a: f64,
    lambda_a: f64,
    robot: &RobotParams,
) -> ZStarReport {
    let max_vn = cells.iter().map(|c| c.local.v_n.abs()).fold(0.0, f64::max);
    let cap = v0 - max_vn;
    let bound = (lambda_a + eta_a) * robot.max_speed();
    let resolution = 1e-4 * v0;
    if !(cap > 0.0) {
        return ZStarReport { z_star: 0.0, cap, bound, resolution, limiting: None, pass: false };
    }
    let ctx = ZContext { v0, ds: [d_range.0, d_range.1], half_axle: robot.half_axle, bound, cap, resolution };
    let best = cells
        .par_chunks(256)
        .map(|chunk| {
            let mut best = (cap, None);
            for c in chunk {
                let z = cell_z_limit(&c.local, &ctx, best.0);
                if z < best.0 {
                    best = (z, Some(GridPoint { s: c.s, t: c.t, d: f64::NAN, sign: 0.0 }));
                }
            }
            best
        })
        .reduce(
            || (cap, None),
            |a, b| match (a.0.partial_cmp(&b.0), a.1, b.1) {
                (Some(std::cmp::Ordering::Less), _, _) => a,
                (Some(std::cmp::Ordering::Greater), _, _) => b,
                // Ties resolve to the smaller (s, t) for an order-independent result.
                (_, Some(pa), Some(pb)) => {
                    if (pa.t, pa.s) <= (pb.t, pb.s) {
                        a
                    } else {
                        b
                    }
                }
                (_, Some(_), None) => a,
                _ => b,
            },
        );
    let z_star = best.0;
    ZStarReport { z_star, cap, bound, resolution, limiting: best.1, pass: z_star > 0.0 }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MainConditionReport {
    pub v_star: f64,
    /// `min(eta_v v0, z_star)`.
    pub v_star_bound: f64,
    pub first_slack: f64,
    pub first_pass: bool,
    pub second_lhs: f64,
    pub second_slack: f64,
    pub second_pass: bool,
    /// Supremum of admissible `delta` for the configured `gamma`.
    pub delta_sup: f64,
    /// `0.99 delta_sup`, strictly inside the admissible set.
    pub suggested_delta: f64,
    pub pass: bool,
}

/// Gain conditions on `gamma`, `delta` given the scanned margins.
pub fn check_main_condition(params: &ControllerParams, margins: &AssumptionMargins, robot: &RobotParams) -> MainConditionReport {
    let v0 = params.v0;
    let vmax = robot.max_speed();
    let l = robot.half_axle;
    let v_star = params.v_star();
    let v_star_bound = (margins.eta_v * v0).min(margins.z_star);
    let first_slack = v_star_bound - v_star;
    let lv = margins.lambda_v + margins.eta_v;
    let la = margins.lambda_a + margins.eta_a;
    let root = (1.0 - lv * lv).max(0.0).sqrt();
    let scale = v0 * (vmax - v0) * root;
    let second_lhs = la + params.gamma * l * v_star / scale;
    let second_slack = 1.0 - second_lhs;
    let v2 = if scale > 0.0 { (1.0 - la).max(0.0) * scale / (params.gamma * l) } else { 0.0 };
    let delta_sup = v_star_bound.min(v2).max(0.0) / params.gamma;
    let first_pass = first_slack >= 0.0;
    let second_pass = second_slack > 0.0 && scale > 0.0;
    MainConditionReport {
        v_star,
        v_star_bound,
        first_slack,
        first_pass,
        second_lhs,
        second_slack,
        second_pass,
        delta_sup,
        suggested_delta: 0.99 * delta_sup,
        pass: first_pass && second_pass && margins.headroom_valid(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaunchReport {
    pub start: RobotState,
    pub d_start: f64,
    pub tau_turn: f64,
    pub tau_one_and_half: f64,
    pub d_min: f64,
    pub d_max: f64,
    pub corridor_ok: bool,
    /// Net rotation of `r - r_*` at one full turn (rad).
    pub alpha_at_turn: f64,
    /// Earliest admissible time after launch start, if any.
    pub t_star: Option<f64>,
    pub rotation_ok: bool,
    pub collision: bool,
}

/// Samples per full turn of the launching circle.
const LAUNCH_SAMPLES_PER_TURN: usize = 4000;
const ALPHA_TOL: f64 = 1e-9;

/// Follows the launching circle (speed `v0`, extreme turn rate away from the
/// obstacle side of the variant) for one and a half turns.
pub fn check_launching_motion(
    obstacle: &Obstacle,
    start: RobotState,
    params: &ControllerParams,
    robot: &RobotParams,
) -> LaunchReport {
    let u_bar = (robot.max_speed() - params.v0) / robot.half_axle;
    let input = ControlInput { v: params.v0, u: params.launch_turn_rate(robot) };
    let tau_turn = TAU / u_bar;
    let tau_15 = 1.5 * tau_turn;
    let n = LAUNCH_SAMPLES_PER_TURN;
    let total = n + n / 2;
    let mut d_min = f64::INFINITY;
    let mut d_max = f64::NEG_INFINITY;
    let mut collision = false;
    let mut prev_phi = 0.0;
    let mut unwrapped = 0.0;
    let mut d_start = f64::NAN;
    let mut alphas = Vec::with_capacity(total + 1);
    for j in 0..=total {
        let t = tau_turn * j as f64 / n as f64;
        let pose = robot::advance(start, input, t);
        let r = pose.position();
        let contact = match sensing::contact(obstacle, r, start.t + t) {
            Ok(c) => c,
            Err(SensingError::InsideObstacle { .. }) | Err(_) => {
                collision = true;
                break;
            }
        };
        let d = contact.distance;
        if j == 0 {
            d_start = d;
        }
        if d < params.d_safe {
            collision = true;
        }
        d_min = d_min.min(d);
        d_max = d_max.max(d);
        let rel: Vec2 = r - contact.fields.point;
        let phi = rel.y.atan2(rel.x);
        if j > 0 {
            unwrapped += wrap_angle(phi - prev_phi);
        }
        prev_phi = phi;
        alphas.push((t, unwrapped.abs()));
    }
    let complete = alphas.len() == total + 1;
    let corridor_ok = complete && !collision && d_min >= params.d_minus && d_max <= params.d_plus;
    let alpha_at_turn = alphas.get(n).map_or(f64::NAN, |a| a.1);
    let t_star = if complete && !collision {
        alphas[n..]
            .iter()
            .find(|&&(t, alpha)| alpha <= (t - tau_turn) * u_bar + ALPHA_TOL)
            .map(|&(t, _)| if t == alphas[n].0 { tau_turn } else { t })
    } else {
        None
    };
    LaunchReport {
        start,
        d_start,
        tau_turn,
        tau_one_and_half: tau_15,
        d_min,
        d_max,
        corridor_ok,
        alpha_at_turn,
        t_star,
        rotation_ok: t_star.is_some(),
        collision,
    }
}

/// Random launch poses at distance `d_av` whose sliding variable is
/// non-positive, as required to engage avoidance.
pub fn sample_launch_states(
    obstacle: &Obstacle,
    params: &ControllerParams,
    t0: f64,
    horizon: f64,
    count: usize,
    seed: u64,
) -> Vec<RobotState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0;
    while out.len() < count && attempts < 50 * count.max(1) {
        attempts += 1;
        let s: f64 = rng.random();
        let t = if obstacle.is_static() { t0 } else { t0 + horizon * rng.random::<f64>() };
        let Ok(f) = obstacle.fields(s, t) else { continue };
        let r = f.point - f.normal * params.d_av;
        // Approaching headings: within a half-plane facing the obstacle.
        let inward = f.normal.y.atan2(f.normal.x);
        let theta = wrap_angle(inward + PI * (rng.random::<f64>() - 0.5));
        let state = RobotState::new(r.x, r.y, theta, t);
        let Ok(c) = sensing::contact(obstacle, r, t) else { continue };
        if (c.distance - params.d_av).abs() > 1e-9 {
            // Another part of the boundary is nearer: not a valid launch point.
            continue;
        }
        let d_dot = c.distance_rate(state.velocity(params.upsilon(c.distance)));
        let reading = sensing::SensorReading { d: c.distance, d_dot, heading: [1.0, 0.0], in_range: true };
        if params.surface(&reading) <= 0.0 {
            out.push(state);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaunchSummary {
    pub simulated: Vec<LaunchReport>,
    pub sampled: Vec<LaunchReport>,
    pub corridor_ok: bool,
    pub rotation_ok: bool,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub scenario: String,
    pub horizon: f64,
    pub grid_s: usize,
    pub grid_t: usize,
    pub horizon_note: String,
    pub curvature: CurvatureReport,
    pub margins: AssumptionMargins,
    pub z_star: ZStarReport,
    pub main_condition: MainConditionReport,
    pub launches: LaunchSummary,
    /// Names of the failed inequalities.
    pub failures: Vec<String>,
    pub pass: bool,
}

/// Full feasibility check of a scenario. `launches` are avoidance
/// engagements met in simulation; `scenario.check.launch_samples` random
/// launches are added.
pub fn check_scenario(scenario: &Scenario, launches: &[RobotState]) -> Result<FeasibilityReport, ObstacleError> {
    let obstacle = scenario.build_obstacle().map_err(|e| ObstacleError::InvalidMap(e.to_string()))?;
    let p = &scenario.controller;
    let robot = &scenario.robot;
    let t0 = scenario.initial.t;
    let horizon = scenario.run.horizon;
    let times = grid_times(&obstacle, t0, horizon, scenario.check.grid_dt);
    let cells = field_table(&obstacle, scenario.check.grid_s, &times)?;
    let d_range = (p.d_minus, p.d_plus);

    let curvature = check_assumption3(&cells, p.d_plus, scenario.check.margin_floor);
    let mut margins = check_assumption4(&cells, p.v0, d_range, robot);
    let z_star = if margins.acceleration.pass {
        find_z_star(&cells, p.v0, d_range, margins.eta_a, margins.lambda_a, robot)
    } else {
        ZStarReport {
            z_star: 0.0,
            cap: p.v0 - margins.lambda_v * p.v0,
            bound: (margins.lambda_a + margins.eta_a) * robot.max_speed(),
            resolution: 1e-4 * p.v0,
            limiting: None,
            pass: false,
        }
    };
    margins.z_star = z_star.z_star;
    let main_condition = check_main_condition(p, &margins, robot);

    let report_of = |s: &RobotState| check_launching_motion(&obstacle, *s, p, robot);
    let simulated: Vec<LaunchReport> = launches.iter().map(report_of).collect();
    let sampled_states = sample_launch_states(&obstacle, p, t0, horizon, scenario.check.launch_samples, scenario.run.seed);
    let sampled: Vec<LaunchReport> = sampled_states.iter().map(report_of).collect();
    let all = simulated.iter().chain(&sampled);
    let launches = LaunchSummary {
        corridor_ok: all.clone().all(|r| r.corridor_ok),
        rotation_ok: all.clone().all(|r| r.rotation_ok),
        note: format!(
            "launching motions checked: {} met in simulation and {} sampled (seed {}); any other launch is unchecked",
            simulated.len(),
            sampled.len(),
            scenario.run.seed
        ),
        simulated,
        sampled,
    };

    let mut failures = Vec::new();
    if !curvature.pass {
        failures.push(CURVATURE_INEQUALITY.to_string());
    }
    for ineq in [&margins.normal, &margins.acceleration, &margins.tangential] {
        if !ineq.pass {
            failures.push(ineq.name.clone());
        }
    }
    if !z_star.pass {
        failures.push(OMEGA_INEQUALITY.to_string());
    }
    if !main_condition.first_pass {
        failures.push(GAIN_INEQUALITY_1.to_string());
    }
    if !main_condition.second_pass {
        failures.push(GAIN_INEQUALITY_2.to_string());
    }
    if !launches.corridor_ok {
        failures.push(LAUNCH_CORRIDOR.to_string());
    }
    if !launches.rotation_ok {
        failures.push(LAUNCH_ROTATION.to_string());
    }
    Ok(FeasibilityReport {
        scenario: scenario.name.clone(),
        horizon,
        grid_s: scenario.check.grid_s,
        grid_t: times.len(),
        horizon_note: if obstacle.is_static() {
            "static obstacle: one time sample covers every t".into()
        } else {
            format!("time-uniform bounds approximated on [{t0}, {}] every {} s", t0 + horizon, scenario.check.grid_dt)
        },
        pass: failures.is_empty(),
        curvature,
        margins,
        z_star,
        main_condition,
        launches,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::tests::{params, robot};
    use crate::obstacle::{BoundaryShape, ConfigurationMap, MapPrimitive, Profile, ReferenceBoundary};
    use approx::assert_abs_diff_eq;

    fn static_disc() -> Obstacle {
        Obstacle::new(ReferenceBoundary::circle([0.0, 0.0], 1.0).unwrap(), ConfigurationMap::identity())
    }

    fn kin(kappa: f64, v_n: f64, v_t: f64, a_n: f64, sigma: f64) -> BoundaryKinematics {
        BoundaryKinematics {
            s_star: 0.0,
            r_star: [0.0, 0.0],
            tangent: [1.0, 0.0],
            normal: [0.0, 1.0],
            kappa,
            v_n,
            v_t,
            a_n,
            sigma,
            xi: 0.0,
            s_dot: 0.0,
            mu: 0.0,
        }
    }

    #[test]
    fn xi_and_a_examples() {
        let (xi, a) = lemma2_quantities(&kin(1.0, 0.0, 0.0, 0.0, 0.0), 0.3, 0.2, 1.0).unwrap();
        assert_abs_diff_eq!(xi, 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(a, 0.04 / 1.3, epsilon = 1e-15);
        let (_, a) = lemma2_quantities(&kin(0.0, 0.0, 0.0, 0.0, 0.0), 0.3, 0.2, -1.0).unwrap();
        assert_eq!(a, 0.0);
        assert!(lemma2_quantities(&kin(1.0, 0.3, 0.0, 0.0, 0.0), 0.3, 0.2, 1.0).is_err());
        assert!(lemma2_quantities(&kin(-5.0, 0.0, 0.0, 0.0, 0.0), 0.3, 0.2, 1.0).is_err());
    }

    #[test]
    fn xi_and_a_on_rotating_disc_match_raw_map_derivatives() {
        // Disc of radius 1 about (0.5, 0) rotating at 0.1 rad/s about the origin.
        let w = 0.1;
        let o = Obstacle::new(
            ReferenceBoundary::circle([0.5, 0.0], 1.0).unwrap(),
            ConfigurationMap::new(vec![MapPrimitive::Rotate {
                cx: Profile::Constant(0.0),
                cy: Profile::Constant(0.0),
                angle: Profile::Linear { offset: 0.0, rate: w },
            }]),
        );
        let (s, t, d, v) = (0.15, 2.0, 0.3, 0.2);
        let f = o.fields(s, t).unwrap();
        let k = BoundaryKinematics::from_fields(&f, d, Vec2::zeros());
        let (xi, a) = lemma2_quantities(&k, d, v, 1.0).unwrap();
        // Independent recomputation: rigid rotation moves x with w J x and
        // accelerates it with -w² x; sigma equals w for any rigid rotation.
        let p = f.point;
        let vel = Vec2::new(-w * p.y, w * p.x);
        let acc = -p * (w * w);
        let th = 2.0 * PI * s + w * t;
        let tang = Vec2::new(-th.sin(), th.cos());
        let norm = Vec2::new(-tang.y, tang.x);
        let (vn, vt, an) = (vel.dot(&norm), vel.dot(&tang), acc.dot(&norm));
        let xi_ref = -vt + (v * v - vn * vn).sqrt();
        let a_ref = an + (2.0 * w * xi_ref + 1.0 * xi_ref * xi_ref - d * w * w) / (1.0 + d);
        assert_abs_diff_eq!(xi, xi_ref, epsilon = 1e-12);
        assert_abs_diff_eq!(a, a_ref, epsilon = 1e-12);
    }

    #[test]
    fn xi_and_a_are_parametrization_invariant() {
        let circle = static_disc();
        // The same disc as a rotated ellipse: a phase-shifted parameter.
        let ellipse = Obstacle::from_shape(
            BoundaryShape::Ellipse { center: [0.0, 0.0], semi_x: 1.0, semi_y: 1.0, angle: 0.7 },
            ConfigurationMap::new(vec![MapPrimitive::Translate {
                dx: Profile::Linear { offset: 0.0, rate: 0.03 },
                dy: Profile::Sinusoid { offset: 0.0, amplitude: 0.1, frequency: 0.5, phase: 0.0 },
            }]),
        )
        .unwrap();
        let circle_moving = Obstacle::new(circle.boundary().clone(), ellipse.map().clone());
        for i in 0..20 {
            let s = i as f64 / 20.0;
            let t = 1.3;
            let fa = circle_moving.fields(s, t).unwrap();
            let sb = (s - 0.7 / TAU).rem_euclid(1.0);
            let fb = ellipse.fields(sb, t).unwrap();
            assert!((fa.point - fb.point).norm() < 1e-12);
            for sign in SIGNS {
                for d in [0.2, 0.3, 0.4] {
                    let ka = BoundaryKinematics::from_fields(&fa, d, Vec2::zeros());
                    let kb = BoundaryKinematics::from_fields(&fb, d, Vec2::zeros());
                    let a = lemma2_quantities(&ka, d, 0.2, sign).unwrap();
                    let b = lemma2_quantities(&kb, d, 0.2, sign).unwrap();
                    assert_abs_diff_eq!(a.0, b.0, epsilon = 1e-9);
                    assert_abs_diff_eq!(a.1, b.1, epsilon = 1e-9);
                }
            }
        }
    }

    #[test]
    fn acceleration_term_is_monotone_in_d_between_edges() {
        let o = Obstacle::from_shape(
            BoundaryShape::Ellipse { center: [0.0, 0.0], semi_x: 1.5, semi_y: 0.8, angle: 0.2 },
            ConfigurationMap::new(vec![
                MapPrimitive::Rotate {
                    cx: Profile::Constant(0.2),
                    cy: Profile::Constant(0.0),
                    angle: Profile::Sinusoid { offset: 0.0, amplitude: 0.3, frequency: 0.4, phase: 0.0 },
                },
                MapPrimitive::Translate { dx: Profile::Linear { offset: 0.0, rate: 0.02 }, dy: Profile::Constant(0.0) },
            ]),
        )
        .unwrap();
        let (dm, dp) = (0.2, 0.4);
        for cell in field_table(&o, 90, &[0.0, 1.7, 4.2]).unwrap() {
            for sign in SIGNS {
                let at = |d: f64| shifted_terms(&cell.local, d, 0.2, 0.0, sign).unwrap().1;
                let (a0, a1) = (at(dm), at(dp));
                let mut prev = a0;
                for j in 1..=10 {
                    let d = dm + (dp - dm) * j as f64 / 11.0;
                    let a = at(d);
                    assert!((a - prev) * (a1 - a0) >= -1e-15, "not monotone at {cell:?}");
                    assert!(a >= a0.min(a1) - 1e-15 && a <= a0.max(a1) + 1e-15);
                    prev = a;
                }
            }
        }
    }

    #[test]
    fn curvature_margin_examples() {
        let d_plus = 0.4;
        let disc = field_table(&static_disc(), 64, &[0.0]).unwrap();
        let r = check_assumption3(&disc, d_plus, 0.05);
        assert_eq!(r.margin, 1.0);
        assert!(r.pass);
        let mk = |kappa: f64| vec![Cell { s: 0.0, t: 0.0, local: LocalKinematics { kappa, v_n: 0.0, v_t: 0.0, a_n: 0.0, sigma: 0.0 } }];
        let r = check_assumption3(&mk(-1.0 / (2.0 * d_plus)), d_plus, 0.05);
        assert_abs_diff_eq!(r.margin, 0.5, epsilon = 1e-15);
        assert!(r.pass);
        let r = check_assumption3(&mk(-1.5 / d_plus), d_plus, 0.05);
        assert_abs_diff_eq!(r.margin, -0.5, epsilon = 1e-15);
        assert!(!r.pass);
    }

    #[test]
    fn concave_corner_of_rounded_polygon_sets_margin() {
        // L-shaped polygon: the reflex corner becomes an arc of curvature -1/r.
        let r = 0.5;
        let o = Obstacle::from_shape(
            BoundaryShape::RoundedPolygon {
                vertices: vec![[0.0, 0.0], [4.0, 0.0], [4.0, 2.0], [2.0, 2.0], [2.0, 4.0], [0.0, 4.0]],
                corner_radius: r,
            },
            ConfigurationMap::identity(),
        )
        .unwrap();
        let cells = field_table(&o, 2000, &[0.0]).unwrap();
        let rep = check_assumption3(&cells, 0.4, 0.05);
        assert_abs_diff_eq!(rep.margin, 1.0 - 0.4 / r, epsilon = 1e-9);
    }

    #[test]
    fn static_disc_margins() {
        let p = params();
        let cells = field_table(&static_disc(), 360, &[0.0]).unwrap();
        let m = check_assumption4(&cells, p.v0, (p.d_minus, p.d_plus), &robot());
        assert!(m.pass);
        // Worst case at d_minus: A = xi²/(1 + d) with xi = v0.
        let lhs = (0.04 / 1.2) * 0.5 / 0.2 + 0.2;
        assert_abs_diff_eq!(m.lambda_a, lhs / 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(m.lambda_a, 0.566_666_666_666_666_7, epsilon = 1e-12);
        assert_abs_diff_eq!(m.eta_a, 0.5 * (1.0 - m.lambda_a), epsilon = 1e-15);
        assert!(m.lambda_v < 1e-8);
        assert_abs_diff_eq!(m.eps_v, p.v0, epsilon = 1e-12);
        assert!(m.headroom_valid());
    }

    #[test]
    fn head_on_translation_violates_normal_bound() {
        let p = params();
        let o = Obstacle::new(
            ReferenceBoundary::circle([0.0, 0.0], 1.0).unwrap(),
            ConfigurationMap::new(vec![MapPrimitive::Translate {
                dx: Profile::Linear { offset: 0.0, rate: 2.0 * p.v0 },
                dy: Profile::Constant(0.0),
            }]),
        );
        let cells = field_table(&o, 360, &[0.0, 1.0]).unwrap();
        let m = check_assumption4(&cells, p.v0, (p.d_minus, p.d_plus), &robot());
        assert!(!m.normal.pass);
        assert!(!m.pass);
        // The facing point is s = 0, where V_N = -2 v0.
        let worst = m.normal.worst.unwrap();
        assert!(worst.s.min(1.0 - worst.s) < 1e-9 || (worst.s - 0.5).abs() < 1e-9);
        assert_abs_diff_eq!(m.lambda_v, 2.0, epsilon = 1e-9);
    }

    #[test]
    fn omega_examples() {
        let r = robot();
        let p = params();
        let k = LocalKinematics { kappa: 1.0, v_n: 0.0, v_t: 0.0, a_n: 0.0, sigma: 0.0 };
        for d in [0.2, 0.4] {
            for sign in SIGNS {
                assert_eq!(omega_value(&k, d, p.v0, 0.0, sign, r.half_axle).unwrap(), acceleration_lhs(&k, d, p.v0, sign, r.half_axle).unwrap());
            }
        }
        // Static: Omega(z) = L kappa sqrt(v² - z²)/(1 + kappa d) + v.
        let z: f64 = 0.05;
        let expected = 0.5 * (0.04f64 - z * z).sqrt() / 1.3 + 0.2;
        assert_abs_diff_eq!(omega_value(&k, 0.3, 0.2, z, 1.0, 0.5).unwrap(), expected, epsilon = 1e-15);
        assert_eq!(omega_value(&k, 0.3, 0.2, z, 1.0, 0.5).unwrap(), omega_value(&k, 0.3, 0.2, -z, 1.0, 0.5).unwrap());
        let o = static_disc();
        assert_abs_diff_eq!(omega_margin(&o, 0.3, 0.0, 0.2, 0.3, z, 1.0, &r).unwrap(), expected, epsilon = 1e-12);
    }

    #[test]
    fn z_star_search() {
        let r = robot();
        let p = params();
        let cells = field_table(&static_disc(), 360, &[0.0]).unwrap();
        let m = check_assumption4(&cells, p.v0, (p.d_minus, p.d_plus), &r);
        let z = find_z_star(&cells, p.v0, (p.d_minus, p.d_plus), m.eta_a, m.lambda_a, &r);
        assert!(z.pass && z.z_star > 0.0);
        // Omega decreases with |z| on a static disc: only the domain limits z_star.
        assert!(z.z_star <= z.cap && z.cap - z.z_star <= 2.0 * z.resolution + z.cap / Z_SCAN_STEPS as f64);
        // Exact equality at z = 0 leaves no room.
        let eq = find_z_star(&cells, p.v0, (p.d_minus, p.d_plus), 0.0, m.lambda_a, &r);
        assert_eq!(eq.z_star, 0.0);
        assert!(!eq.pass);
    }

    #[test]
    fn z_star_grows_with_eta() {
        // Large normal acceleration: Omega = L a_n/root + L root/(1 + d) + v
        // rises as |z| shrinks the root, so the bound limits z_star.
        let cells = vec![Cell {
            s: 0.0,
            t: 0.0,
            local: LocalKinematics { kappa: 1.0, v_n: 0.0, v_t: 0.0, a_n: 0.05, sigma: 0.0 },
        }];
        let r = robot();
        let p = params();
        let dr = (p.d_minus, p.d_plus);
        let m = check_assumption4(&cells, p.v0, dr, &r);
        assert!(m.pass);
        let zs: Vec<f64> = [0.01, 0.03, 0.08]
            .iter()
            .map(|&e| {
                let z = find_z_star(&cells, p.v0, dr, e, m.lambda_a, &r);
                assert!(z.pass);
                // Omega below the bound at z_star, above it one resolution step further.
                let worst = |z: f64| {
                    [dr.0, dr.1]
                        .iter()
                        .flat_map(|&d| SIGNS.map(|sg| omega_value(&cells[0].local, d, p.v0, z, sg, r.half_axle).unwrap()))
                        .fold(f64::NEG_INFINITY, f64::max)
                };
                assert!(worst(z.z_star) < z.bound);
                assert!(worst(z.z_star + 2.0 * z.resolution) >= z.bound);
                z.z_star
            })
            .collect();
        assert!(zs[0] < zs[1] && zs[1] < zs[2], "{zs:?}");
    }

    fn margins_for(la_plus_ea: f64, lv_plus_ev: f64, z_star: f64) -> AssumptionMargins {
        let empty = InequalityReport { name: String::new(), worst_slack: 1.0, worst: None, pass: true, violations: vec![] };
        AssumptionMargins {
            lambda_v: lv_plus_ev / 2.0,
            lambda_a: la_plus_ea - 0.05,
            eps_v: 0.1,
            eta_v: lv_plus_ev / 2.0,
            eta_a: 0.05,
            z_star,
            normal: empty.clone(),
            acceleration: empty.clone(),
            tangential: empty,
            pass: true,
        }
    }

    #[test]
    fn main_condition_examples() {
        let r = robot();
        let mut p = params();
        p.gamma = 1.0;
        p.delta = 0.01;
        let m = margins_for(0.9, 0.5, 0.1);
        let rep = check_main_condition(&p, &m, &r);
        let expected = 0.9 + 0.5 * 0.01 / (0.2 * 0.3 * 0.75f64.sqrt());
        assert_abs_diff_eq!(rep.second_lhs, expected, epsilon = 1e-12);
        assert_abs_diff_eq!(rep.second_lhs, 0.9962, epsilon = 1e-4);
        assert!(rep.pass);

        // v_star exactly eta_v v0 with a larger z_star.
        p.delta = m.eta_v * p.v0;
        let wide = margins_for(0.2, 0.5, 1.0);
        let rep = check_main_condition(&p, &wide, &r);
        assert_eq!(rep.first_slack, 0.0);
        assert!(rep.first_pass);

        // gamma delta above z_star.
        p.delta = 0.02;
        let rep = check_main_condition(&p, &margins_for(0.2, 0.5, 0.01), &r);
        assert!(!rep.first_pass && rep.first_slack < 0.0);
        assert!(rep.suggested_delta < 0.01);
        p.delta = rep.suggested_delta;
        assert!(check_main_condition(&p, &margins_for(0.2, 0.5, 0.01), &r).pass);
    }

    #[test]
    fn static_disc_delta_supremum() {
        let r = robot();
        let p = params();
        let cells = field_table(&static_disc(), 360, &[0.0]).unwrap();
        let mut m = check_assumption4(&cells, p.v0, (p.d_minus, p.d_plus), &r);
        m.z_star = find_z_star(&cells, p.v0, (p.d_minus, p.d_plus), m.eta_a, m.lambda_a, &r).z_star;
        let rep = check_main_condition(&p, &m, &r);
        // (1 - (lambda_a + eta_a)) v0 (V - v0) sqrt(1 - (lambda_v + eta_v)²) / (gamma L)
        let la = m.lambda_a + m.eta_a;
        let lv = m.lambda_v + m.eta_v;
        let expected = (1.0 - la) * 0.2 * 0.3 * (1.0 - lv * lv).sqrt() / 0.5;
        assert_abs_diff_eq!(rep.delta_sup, expected, epsilon = 1e-12);
        assert!((rep.delta_sup - 0.02252).abs() < 1e-4);
    }

    #[test]
    fn launch_on_static_disc_closes_its_loop() {
        let p = params();
        let r = robot();
        let o = static_disc();
        let start = RobotState::new(-(1.0 + p.d_av), 0.0, 0.0, 0.0);
        let rep = check_launching_motion(&o, start, &p, &r);
        assert!(!rep.collision);
        assert_abs_diff_eq!(rep.tau_turn, TAU / 0.6, epsilon = 1e-12);
        assert!(rep.alpha_at_turn < ALPHA_TOL, "{}", rep.alpha_at_turn);
        assert_eq!(rep.t_star, Some(rep.tau_turn));
        // Radius v0 L / (V - v0) = 1/3: distance sweeps 2/3 of a metre.
        assert!(rep.d_max - rep.d_min > 0.5);
    }

    #[test]
    fn launch_circle_inside_band_keeps_corridor() {
        // A huge disc is locally a wall; start heading along it so the launch
        // circle of radius 1/3 stays within [d_av - 2/3, d_av] of it.
        let mut p = params();
        p.d_minus = 0.2;
        p.d0 = 0.5;
        p.d_av = 0.95;
        p.d_plus = 1.0;
        p.d0_upsilon = 1.0;
        p.d_cr = 1.5;
        let r = robot();
        let o = Obstacle::new(ReferenceBoundary::circle([0.0, -500.0], 500.0).unwrap(), ConfigurationMap::identity());
        // Normal variant turns clockwise; heading +x starting above the wall
        // curves the robot down toward the obstacle and back.
        let start = RobotState::new(0.0, p.d_av, 0.0, 0.0);
        let rep = check_launching_motion(&o, start, &p, &r);
        assert!(rep.corridor_ok, "{rep:?}");
        assert!(rep.d_min > p.d_av - 2.0 / 3.0 - 1e-3);
        assert!(rep.rotation_ok);
    }

    #[test]
    fn launch_against_translating_wall_uses_later_t_star() {
        // Steadily translating wall: r - r_* rotates at most pi.
        let p = params();
        let r = robot();
        let o = Obstacle::new(
            ReferenceBoundary::circle([0.0, -500.0], 500.0).unwrap(),
            ConfigurationMap::new(vec![MapPrimitive::Translate {
                dx: Profile::Linear { offset: 0.0, rate: 0.05 },
                dy: Profile::Constant(0.0),
            }]),
        );
        let start = RobotState::new(0.0, 1.0, 0.0, 0.0);
        let rep = check_launching_motion(&o, start, &p, &r);
        assert!(rep.rotation_ok);
        let t = rep.t_star.unwrap();
        assert!(t >= rep.tau_turn && t <= rep.tau_one_and_half + 1e-12);
    }

    #[test]
    fn sampled_launches_are_valid_engagements() {
        let p = params();
        let o = static_disc();
        let states = sample_launch_states(&o, &p, 0.0, 10.0, 8, 7);
        assert_eq!(states.len(), 8);
        assert_eq!(states, sample_launch_states(&o, &p, 0.0, 10.0, 8, 7));
        for s in states {
            let c = sensing::contact(&o, s.position(), s.t).unwrap();
            assert_abs_diff_eq!(c.distance, p.d_av, epsilon = 1e-9);
        }
    }
}
