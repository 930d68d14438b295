//! Distance to the obstacle, its rate, and the heading to the target: the
//! only measurements the controller consumes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::obstacle::{BoundaryFields, BoundaryKinematics, Obstacle, ObstacleError, SCAN_SAMPLES};
use crate::Vec2;

const NEWTON_ITERS: usize = 20;
const STATIONARITY_TOL: f64 = 1e-12;
/// Local minima whose refined distances agree within this are a ridge tie.
pub const TIE_TOL: f64 = 1e-9;
/// Number of sampled local minima refined by Newton.
const CANDIDATES: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SensingError {
    #[error("robot at ({x}, {y}) is inside the obstacle at t={t}")]
    InsideObstacle { x: f64, y: f64, t: f64 },
    #[error("target reached: {distance} m away")]
    AtTarget { distance: f64 },
    #[error(transparent)]
    Obstacle(#[from] ObstacleError),
}

/// Result of the global nearest-point search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub s: f64,
    pub point: Vec2,
    pub distance: f64,
    /// Two local minima agreed within [`TIE_TOL`]; the smaller `s` was kept.
    pub tie: bool,
}

/// What the robot perceives at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorReading {
    pub d: f64,
    pub d_dot: f64,
    /// Unit vector towards the target.
    pub heading: [f64; 2],
    pub in_range: bool,
}

impl SensorReading {
    pub fn heading_vec(&self) -> Vec2 {
        Vec2::new(self.heading[0], self.heading[1])
    }
}

/// Nearest boundary point with the full boundary data there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contact {
    pub fields: BoundaryFields,
    pub distance: f64,
    pub tie: bool,
}

impl Contact {
    /// `d_dot = <V(r_*) - r_dot, N>`.
    pub fn distance_rate(&self, robot_velocity: Vec2) -> f64 {
        (self.fields.velocity - robot_velocity).dot(&self.fields.normal)
    }

    pub fn kinematics(&self, robot_velocity: Vec2) -> BoundaryKinematics {
        BoundaryKinematics::from_fields(&self.fields, self.distance, robot_velocity)
    }
}

fn curve_jet(obstacle: &Obstacle, s: f64, t: f64) -> (Vec2, Vec2, Vec2) {
    let (c, c1, c2) = obstacle.boundary().eval(s);
    let jet = obstacle.map().jet(c, t);
    (jet.value, jet.jac * c1, jet.jac * c2 + jet.hess_apply(&c1, &c1))
}

/// Newton refinement of `<p(s) - r, p'(s)> = 0` safeguarded by the bracket
/// `[lo, hi]` around a sampled local minimum.
fn refine(obstacle: &Obstacle, r: Vec2, t: f64, s0: f64, lo: f64, hi: f64) -> (f64, Vec2, f64) {
    let residual = |s: f64| {
        let (p, p1, p2) = curve_jet(obstacle, s, t);
        let diff = p - r;
        (diff.dot(&p1), p1.norm_squared() + diff.dot(&p2), p)
    };
    let (mut lo, mut hi) = (lo, hi);
    let (f_lo, _, _) = residual(lo);
    let (f_hi, _, _) = residual(hi);
    let bracketed = f_lo <= 0.0 && f_hi >= 0.0;
    let mut s = s0;
    for _ in 0..NEWTON_ITERS {
        let (f, df, _) = residual(s);
        if f.abs() <= STATIONARITY_TOL {
            break;
        }
        if bracketed {
            if f < 0.0 {
                lo = s;
            } else {
                hi = s;
            }
        }
        let mut next = if df > 0.0 { s - f / df } else { f64::NAN };
        if !(next >= lo && next <= hi) {
            next = if bracketed { 0.5 * (lo + hi) } else { next.clamp(lo, hi) };
            if next.is_nan() {
                break;
            }
        }
        let step = (next - s).abs();
        s = next;
        if step <= 1e-15 {
            break;
        }
    }
    let p = obstacle.boundary_point(s, t);
    (s.rem_euclid(1.0), p, (r - p).norm())
}

/// Global minimum of `|r - Phi(c(s), t)|` over `s`: coarse scan of
/// [`SCAN_SAMPLES`] reference points, then Newton on the best local minima.
pub fn project(obstacle: &Obstacle, r: Vec2, t: f64) -> Projection {
    let samples = obstacle.scan_samples();
    let n = samples.len();
    let dist2: Vec<f64> = samples.iter().map(|&c| (obstacle.map_point(c, t) - r).norm_squared()).collect();
    let mut minima: Vec<usize> = (0..n)
        .filter(|&i| {
            let prev = dist2[(i + n - 1) % n];
            let next = dist2[(i + 1) % n];
            dist2[i] <= prev && dist2[i] < next || dist2[i] < prev && dist2[i] <= next
        })
        .collect();
    if minima.is_empty() {
        // Constant distance (robot at the centre of a circle).
        minima.push(0);
    }
    minima.sort_by(|&a, &b| dist2[a].partial_cmp(&dist2[b]).unwrap().then(a.cmp(&b)));
    minima.truncate(CANDIDATES);
    let h = 1.0 / SCAN_SAMPLES as f64;
    let mut refined: Vec<(f64, Vec2, f64)> = minima
        .iter()
        .map(|&i| {
            let s0 = i as f64 * h;
            refine(obstacle, r, t, s0, s0 - h, s0 + h)
        })
        .collect();
    refined.sort_by(|a, b| a.2.partial_cmp(&b.2).unwrap().then(a.0.partial_cmp(&b.0).unwrap()));
    let best = refined[0];
    // A tie needs a genuinely distinct second minimum at the same distance.
    let rival = refined[1..].iter().find(|c| {
        let gap = (c.0 - best.0).abs();
        gap.min(1.0 - gap) > 2.0 * h && (c.2 - best.2).abs() <= TIE_TOL
    });
    match rival {
        Some(other) if other.0 < best.0 => Projection { s: other.0, point: other.1, distance: other.2, tie: true },
        Some(_) => Projection { s: best.0, point: best.1, distance: best.2, tie: true },
        None => Projection { s: best.0, point: best.1, distance: best.2, tie: false },
    }
}

/// Nearest boundary point; errors when `r` lies inside `D(t)`.
pub fn nearest_point(obstacle: &Obstacle, r: Vec2, t: f64) -> Result<Projection, SensingError> {
    Ok(contact(obstacle, r, t)?.projection())
}

impl Contact {
    pub fn projection(&self) -> Projection {
        Projection { s: self.fields.s, point: self.fields.point, distance: self.distance, tie: self.tie }
    }
}

/// Nearest point together with the boundary fields there.
pub fn contact(obstacle: &Obstacle, r: Vec2, t: f64) -> Result<Contact, SensingError> {
    let proj = project(obstacle, r, t);
    let fields = obstacle.fields(proj.s, t)?;
    // The outward direction at the nearest point is -N.
    let inward = (r - proj.point).dot(&fields.normal);
    if inward > 0.0 || proj.distance == 0.0 {
        return Err(SensingError::InsideObstacle { x: r.x, y: r.y, t });
    }
    Ok(Contact { fields, distance: proj.distance, tie: proj.tie })
}

/// `d_dot` for a robot at `r` moving with `r_dot`.
pub fn distance_rate(obstacle: &Obstacle, r: Vec2, r_dot: Vec2, t: f64) -> Result<f64, SensingError> {
    Ok(contact(obstacle, r, t)?.distance_rate(r_dot))
}

/// Unit vector from `r` to `target`.
pub fn target_heading(r: Vec2, target: Vec2, reach_radius: f64) -> Result<Vec2, SensingError> {
    let diff = target - r;
    let distance = diff.norm();
    if distance < reach_radius || distance == 0.0 {
        return Err(SensingError::AtTarget { distance });
    }
    Ok(diff / distance)
}
