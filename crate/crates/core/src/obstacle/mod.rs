//! Moving and deforming obstacle: a reference boundary curve carried by a
//! time-varying configuration map.
//!
//! All boundary quantities are evaluated through the reference parameter `s`
//! rather than through the inverse map: the Eulerian velocity at the current
//! point `Phi(c(s), t)` is simply `Phi_t(c(s), t)`, and likewise for the
//! acceleration and the velocity gradient `Phi_tr Phi_r^{-1}`.

mod boundary;
mod map;
mod profile;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use boundary::{BoundaryShape, ReferenceBoundary};
pub use map::{ConfigurationMap, MapJet, MapPrimitive};
pub use profile::Profile;

use crate::{Mat2, Vec2};

/// Number of reference samples cached for the coarse nearest-point scan.
pub const SCAN_SAMPLES: usize = 720;

/// Tangent norms below this are treated as degenerate.
pub const DEGENERATE_TANGENT: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObstacleError {
    #[error("invalid boundary: {0}")]
    InvalidBoundary(String),
    #[error("invalid configuration map: {0}")]
    InvalidMap(String),
    #[error("degenerate tangent at s={s}, t={t} (|dp/ds| = {norm})")]
    DegenerateTangent { s: f64, t: f64, norm: f64 },
    #[error("point ({x}, {y}) is {distance} away from the boundary at t={t}, beyond tolerance {tol}")]
    PreimageNotFound { x: f64, y: f64, t: f64, distance: f64, tol: f64 },
}

/// Geometry and kinematics of the deformed boundary at a reference parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryFields {
    pub s: f64,
    pub point: Vec2,
    /// `∂p/∂s` and `∂²p/∂s²` of the deformed curve.
    pub ds: Vec2,
    pub dss: Vec2,
    pub tangent: Vec2,
    /// Inward unit normal: the tangent rotated by +90 degrees.
    pub normal: Vec2,
    pub kappa: f64,
    pub velocity: Vec2,
    pub acceleration: Vec2,
    pub velocity_gradient: Mat2,
    pub sigma: f64,
    pub jacobian_det: f64,
}

impl BoundaryFields {
    pub fn v_n(&self) -> f64 {
        self.velocity.dot(&self.normal)
    }
    pub fn v_t(&self) -> f64 {
        self.velocity.dot(&self.tangent)
    }
    pub fn a_n(&self) -> f64 {
        self.acceleration.dot(&self.normal)
    }
    /// Metric factor `|∂p/∂s|` converting parameter rates to arc-length rates.
    pub fn speed(&self) -> f64 {
        self.ds.norm()
    }
}

/// Boundary kinematics at the nearest point, completed with the
/// robot-dependent terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryKinematics {
    pub s_star: f64,
    pub r_star: [f64; 2],
    pub tangent: [f64; 2],
    pub normal: [f64; 2],
    pub kappa: f64,
    pub v_n: f64,
    pub v_t: f64,
    pub a_n: f64,
    pub sigma: f64,
    /// Tangential speed of the robot relative to the boundary material, `<v, T> - V_T`.
    pub xi: f64,
    /// Speed of the nearest point relative to the boundary material.
    pub s_dot: f64,
    /// `sigma + kappa * s_dot`.
    pub mu: f64,
}

impl BoundaryKinematics {
    /// Completes `fields` for a robot at distance `d` moving with `robot_velocity`.
    pub fn from_fields(fields: &BoundaryFields, d: f64, robot_velocity: Vec2) -> Self {
        let v_t = fields.v_t();
        let xi = robot_velocity.dot(&fields.tangent) - v_t;
        let s_dot = (xi - d * fields.sigma) / (1.0 + fields.kappa * d);
        Self {
            s_star: fields.s,
            r_star: [fields.point.x, fields.point.y],
            tangent: [fields.tangent.x, fields.tangent.y],
            normal: [fields.normal.x, fields.normal.y],
            kappa: fields.kappa,
            v_n: fields.v_n(),
            v_t,
            a_n: fields.a_n(),
            sigma: fields.sigma,
            xi,
            s_dot,
            mu: fields.sigma + fields.kappa * s_dot,
        }
    }
}

/// Obstacle `D(t) = Phi(D_*, t)`; immutable after construction.
#[derive(Debug, Clone)]
pub struct Obstacle {
    boundary: ReferenceBoundary,
    map: ConfigurationMap,
    scan: Vec<Vec2>,
    is_static: bool,
}

impl PartialEq for Obstacle {
    fn eq(&self, other: &Self) -> bool {
        self.boundary == other.boundary && self.map == other.map
    }
}

impl Obstacle {
    pub fn new(boundary: ReferenceBoundary, map: ConfigurationMap) -> Self {
        let scan = (0..SCAN_SAMPLES).map(|i| boundary.point(i as f64 / SCAN_SAMPLES as f64)).collect();
        let is_static = map.is_static();
        Self { boundary, map, scan, is_static }
    }

    pub fn from_shape(shape: BoundaryShape, map: ConfigurationMap) -> Result<Self, ObstacleError> {
        Ok(Self::new(ReferenceBoundary::new(shape)?, map))
    }

    pub fn boundary(&self) -> &ReferenceBoundary {
        &self.boundary
    }

    pub fn map(&self) -> &ConfigurationMap {
        &self.map
    }

    pub fn is_static(&self) -> bool {
        self.is_static
    }

    /// Cached reference samples `c(i / SCAN_SAMPLES)`.
    pub(crate) fn scan_samples(&self) -> &[Vec2] {
        &self.scan
    }

    /// `Phi(c(s), t)`.
    pub fn boundary_point(&self, s: f64, t: f64) -> Vec2 {
        self.map.apply(self.boundary.point(s), t)
    }

    pub(crate) fn map_point(&self, r: Vec2, t: f64) -> Vec2 {
        self.map.apply(r, t)
    }

    /// Full differential data of the deformed boundary at `(s, t)`.
    pub fn fields(&self, s: f64, t: f64) -> Result<BoundaryFields, ObstacleError> {
        let (c, c1, c2) = self.boundary.eval(s);
        let jet = self.map.jet(c, t);
        let ds = jet.jac * c1;
        let dss = jet.jac * c2 + jet.hess_apply(&c1, &c1);
        let norm = ds.norm();
        if !(norm >= DEGENERATE_TANGENT) {
            return Err(ObstacleError::DegenerateTangent { s, t, norm });
        }
        let tangent = ds / norm;
        let normal = Vec2::new(-tangent.y, tangent.x);
        let kappa = (ds.x * dss.y - ds.y * dss.x) / (norm * norm * norm);
        let det = jet.jac.determinant();
        let grad = jet
            .velocity_gradient()
            .ok_or_else(|| ObstacleError::InvalidMap(format!("singular Jacobian at s={s}, t={t}")))?;
        let sigma = (grad * tangent).dot(&normal);
        Ok(BoundaryFields {
            s,
            point: jet.value,
            ds,
            dss,
            tangent,
            normal,
            kappa,
            velocity: jet.vel,
            acceleration: jet.acc,
            velocity_gradient: grad,
            sigma,
            jacobian_det: det,
        })
    }

    /// Eulerian velocity at the boundary point with reference parameter `s`.
    pub fn eulerian_velocity(&self, s: f64, t: f64) -> Vec2 {
        self.map.jet(self.boundary.point(s), t).vel
    }

    pub fn eulerian_acceleration(&self, s: f64, t: f64) -> Vec2 {
        self.map.jet(self.boundary.point(s), t).acc
    }

    /// Unit tangent, inward unit normal and signed curvature.
    pub fn frenet_and_curvature(&self, s: f64, t: f64) -> Result<(Vec2, Vec2, f64), ObstacleError> {
        let f = self.fields(s, t)?;
        Ok((f.tangent, f.normal, f.kappa))
    }

    /// `<V'_r T, N>`.
    pub fn sigma(&self, s: f64, t: f64) -> Result<f64, ObstacleError> {
        Ok(self.fields(s, t)?.sigma)
    }

    /// Eulerian velocity at a spatial point `r` on `∂D(t)`. The point is
    /// located by nearest-point projection and must lie within `tol`.
    pub fn velocity_at(&self, r: Vec2, t: f64, tol: f64) -> Result<Vec2, ObstacleError> {
        let s = self.locate(r, t, tol)?;
        Ok(self.eulerian_velocity(s, t))
    }

    pub fn acceleration_at(&self, r: Vec2, t: f64, tol: f64) -> Result<Vec2, ObstacleError> {
        let s = self.locate(r, t, tol)?;
        Ok(self.eulerian_acceleration(s, t))
    }

    fn locate(&self, r: Vec2, t: f64, tol: f64) -> Result<f64, ObstacleError> {
        let proj = crate::sensing::project(self, r, t);
        if proj.distance > tol {
            return Err(ObstacleError::PreimageNotFound { x: r.x, y: r.y, t, distance: proj.distance, tol });
        }
        Ok(proj.s)
    }

    /// Reflection across the x-axis.
    pub fn mirrored(&self) -> Result<Self, ObstacleError> {
        Self::from_shape(self.boundary.shape().mirrored(), self.map.mirrored())
    }

    /// Sampled checks of Jacobian positivity and injectivity of the deformed
    /// boundary over `[0, horizon]`.
    pub fn validate(&self, horizon: f64, n_s: usize, n_t: usize) -> Result<(), ObstacleError> {
        for p in &self.map.primitives {
            p.validate(horizon).map_err(ObstacleError::InvalidMap)?;
        }
        let times: Vec<f64> = if self.is_static {
            vec![0.0]
        } else {
            (0..n_t).map(|j| horizon * j as f64 / (n_t - 1).max(1) as f64).collect()
        };
        for &t in &times {
            let mut pts = Vec::with_capacity(n_s);
            for i in 0..n_s {
                let s = i as f64 / n_s as f64;
                let jet = self.map.jet(self.boundary.point(s), t);
                let det = jet.jac.determinant();
                if !(det > 0.0) {
                    return Err(ObstacleError::InvalidMap(format!(
                        "Jacobian determinant {det} <= 0 at s={s}, t={t}"
                    )));
                }
                pts.push(jet.value);
            }
            if let Some((i, j)) = boundary::first_self_intersection(&pts) {
                return Err(ObstacleError::InvalidMap(format!(
                    "deformed boundary self-intersects at t={t} (samples {i}, {j})"
                )));
            }
            if boundary::polygon_area(&pts) <= 0.0 {
                return Err(ObstacleError::InvalidMap(format!("map reverses orientation at t={t}")));
            }
        }
        Ok(())
    }

    /// Whether `r` lies inside the sampled polygon of `∂D(t)` (winding test).
    pub fn contains(&self, r: Vec2, t: f64) -> bool {
        let pts: Vec<Vec2> = self.scan.iter().map(|&c| self.map.apply(c, t)).collect();
        let n = pts.len();
        let mut inside = false;
        for i in 0..n {
            let a = pts[i];
            let b = pts[(i + 1) % n];
            if (a.y > r.y) != (b.y > r.y) {
                let x = a.x + (r.y - a.y) / (b.y - a.y) * (b.x - a.x);
                if r.x < x {
                    inside = !inside;
                }
            }
        }
        inside
    }
}
