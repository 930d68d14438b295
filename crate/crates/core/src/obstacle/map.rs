//! Configuration maps carrying the reference obstacle onto its current
//! shape, with analytic time and space derivatives.

use serde::{Deserialize, Serialize};

use super::profile::Profile;
use crate::{Mat2, Vec2};

/// Rotation by +90 degrees.
const SKEW: Mat2 = Mat2::new(0.0, -1.0, 1.0, 0.0);

fn rotation(angle: f64) -> Mat2 {
    let (s, c) = angle.sin_cos();
    Mat2::new(c, -s, s, c)
}

/// Second-order jet of `Phi(r, t)` at one reference point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapJet {
    pub value: Vec2,
    /// Spatial Jacobian.
    pub jac: Mat2,
    /// `hess[k]` is the spatial Hessian of output component `k`.
    pub hess: [Mat2; 2],
    /// First time derivative (Lagrangian velocity).
    pub vel: Vec2,
    /// Second time derivative (Lagrangian acceleration).
    pub acc: Vec2,
    /// Time derivative of the spatial Jacobian.
    pub jac_t: Mat2,
}

impl MapJet {
    pub fn identity(r: Vec2) -> Self {
        Self {
            value: r,
            jac: Mat2::identity(),
            hess: [Mat2::zeros(); 2],
            vel: Vec2::zeros(),
            acc: Vec2::zeros(),
            jac_t: Mat2::zeros(),
        }
    }

    /// `H[a, b]` as a vector.
    pub fn hess_apply(&self, a: &Vec2, b: &Vec2) -> Vec2 {
        Vec2::new(a.dot(&(self.hess[0] * b)), a.dot(&(self.hess[1] * b)))
    }

    /// Matrix with row `k` equal to `(hess[k] w)^T`.
    fn hess_contract(&self, w: &Vec2) -> Mat2 {
        let r0 = self.hess[0] * w;
        let r1 = self.hess[1] * w;
        Mat2::new(r0.x, r0.y, r1.x, r1.y)
    }

    /// Jet of `outer ∘ self`, where `outer` was evaluated at `self.value`.
    pub fn then(&self, outer: &MapJet) -> MapJet {
        let jf = self.jac;
        let jg = outer.jac;
        let hess = [
            jg[(0, 0)] * self.hess[0] + jg[(0, 1)] * self.hess[1] + jf.transpose() * outer.hess[0] * jf,
            jg[(1, 0)] * self.hess[0] + jg[(1, 1)] * self.hess[1] + jf.transpose() * outer.hess[1] * jf,
        ];
        MapJet {
            value: outer.value,
            jac: jg * jf,
            hess,
            vel: outer.vel + jg * self.vel,
            acc: outer.acc + 2.0 * (outer.jac_t * self.vel) + outer.hess_apply(&self.vel, &self.vel) + jg * self.acc,
            jac_t: (outer.jac_t + outer.hess_contract(&self.vel)) * jf + jg * self.jac_t,
        }
    }

    /// Eulerian velocity gradient `V'_r = J_t J^{-1}`.
    pub fn velocity_gradient(&self) -> Option<Mat2> {
        self.jac.try_inverse().map(|inv| self.jac_t * inv)
    }
}

/// One smooth building block of a configuration map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MapPrimitive {
    /// `r + (dx(t), dy(t))`
    Translate { dx: Profile, dy: Profile },
    /// Rotation by `angle(t)` about the moving centre `(cx(t), cy(t))`.
    Rotate { cx: Profile, cy: Profile, angle: Profile },
    /// Scaling by `sx(t)`, `sy(t)` along axes turned by `axis_angle`, about a fixed centre.
    Scale { cx: f64, cy: f64, axis_angle: f64, sx: Profile, sy: Profile },
    /// `r + amplitude(t) sin(k <n, r> + phase) e`; area preserving when `e ⟂ n`.
    Warp { amplitude: Profile, wavenumber: f64, phase: f64, displacement: [f64; 2], variation: [f64; 2] },
}

impl MapPrimitive {
    pub fn apply(&self, r: Vec2, t: f64) -> Vec2 {
        match self {
            MapPrimitive::Translate { dx, dy } => r + Vec2::new(dx.value(t), dy.value(t)),
            MapPrimitive::Rotate { cx, cy, angle } => {
                let c = Vec2::new(cx.value(t), cy.value(t));
                c + rotation(angle.value(t)) * (r - c)
            }
            MapPrimitive::Scale { cx, cy, axis_angle, sx, sy } => {
                let c = Vec2::new(*cx, *cy);
                scale_matrix(*axis_angle, sx.value(t), sy.value(t)) * (r - c) + c
            }
            MapPrimitive::Warp { amplitude, wavenumber, phase, displacement, variation } => {
                let e = Vec2::from(*displacement);
                let n = Vec2::from(*variation);
                let psi = wavenumber * n.dot(&r) + phase;
                r + e * (amplitude.value(t) * psi.sin())
            }
        }
    }

    pub fn jet(&self, r: Vec2, t: f64) -> MapJet {
        match self {
            MapPrimitive::Translate { dx, dy } => {
                let [x0, x1, x2] = dx.eval(t);
                let [y0, y1, y2] = dy.eval(t);
                MapJet {
                    value: r + Vec2::new(x0, y0),
                    vel: Vec2::new(x1, y1),
                    acc: Vec2::new(x2, y2),
                    ..MapJet::identity(r)
                }
            }
            MapPrimitive::Rotate { cx, cy, angle } => {
                let [cx0, cx1, cx2] = cx.eval(t);
                let [cy0, cy1, cy2] = cy.eval(t);
                let [a0, a1, a2] = angle.eval(t);
                let c = Vec2::new(cx0, cy0);
                let c1 = Vec2::new(cx1, cy1);
                let c2 = Vec2::new(cx2, cy2);
                let rot = rotation(a0);
                let rk = rot * SKEW;
                let q = r - c;
                MapJet {
                    value: c + rot * q,
                    jac: rot,
                    hess: [Mat2::zeros(); 2],
                    vel: c1 - rot * c1 + a1 * (rk * q),
                    acc: c2 - rot * c2 - a1 * a1 * (rot * q) + a2 * (rk * q) - 2.0 * a1 * (rk * c1),
                    jac_t: a1 * rk,
                }
            }
            MapPrimitive::Scale { cx, cy, axis_angle, sx, sy } => {
                let [x0, x1, x2] = sx.eval(t);
                let [y0, y1, y2] = sy.eval(t);
                let c = Vec2::new(*cx, *cy);
                let q = r - c;
                let s0 = scale_matrix(*axis_angle, x0, y0);
                let s1 = scale_matrix(*axis_angle, x1, y1);
                let s2 = scale_matrix(*axis_angle, x2, y2);
                MapJet {
                    value: s0 * q + c,
                    jac: s0,
                    hess: [Mat2::zeros(); 2],
                    vel: s1 * q,
                    acc: s2 * q,
                    jac_t: s1,
                }
            }
            MapPrimitive::Warp { amplitude, wavenumber, phase, displacement, variation } => {
                let [a0, a1, a2] = amplitude.eval(t);
                let k = *wavenumber;
                let e = Vec2::from(*displacement);
                let n = Vec2::from(*variation);
                let psi = k * n.dot(&r) + phase;
                let (s, c) = psi.sin_cos();
                let outer = e * n.transpose();
                let nn = n * n.transpose();
                MapJet {
                    value: r + e * (a0 * s),
                    jac: Mat2::identity() + outer * (a0 * k * c),
                    hess: [nn * (-a0 * k * k * s * e.x), nn * (-a0 * k * k * s * e.y)],
                    vel: e * (a1 * s),
                    acc: e * (a2 * s),
                    jac_t: outer * (a1 * k * c),
                }
            }
        }
    }

    pub fn is_static(&self) -> bool {
        match self {
            MapPrimitive::Translate { dx, dy } => dx.is_constant() && dy.is_constant(),
            MapPrimitive::Rotate { cx, cy, angle } => cx.is_constant() && cy.is_constant() && angle.is_constant(),
            MapPrimitive::Scale { sx, sy, .. } => sx.is_constant() && sy.is_constant(),
            MapPrimitive::Warp { amplitude, .. } => amplitude.is_constant(),
        }
    }

    /// Conjugate by the reflection `(x, y) -> (x, -y)`.
    pub fn mirrored(&self) -> MapPrimitive {
        match self {
            MapPrimitive::Translate { dx, dy } => MapPrimitive::Translate { dx: *dx, dy: dy.negated() },
            MapPrimitive::Rotate { cx, cy, angle } => {
                MapPrimitive::Rotate { cx: *cx, cy: cy.negated(), angle: angle.negated() }
            }
            MapPrimitive::Scale { cx, cy, axis_angle, sx, sy } => {
                MapPrimitive::Scale { cx: *cx, cy: -cy, axis_angle: -axis_angle, sx: *sx, sy: *sy }
            }
            MapPrimitive::Warp { amplitude, wavenumber, phase, displacement, variation } => MapPrimitive::Warp {
                amplitude: *amplitude,
                wavenumber: *wavenumber,
                phase: *phase,
                displacement: [displacement[0], -displacement[1]],
                variation: [variation[0], -variation[1]],
            },
        }
    }

    /// Cheap parameter sanity checks; global injectivity is checked by the
    /// obstacle on samples.
    pub fn validate(&self, horizon: f64) -> Result<(), String> {
        match self {
            MapPrimitive::Scale { sx, sy, .. } => {
                let (lo_x, _) = sx.range(horizon);
                let (lo_y, _) = sy.range(horizon);
                if lo_x <= 0.0 || lo_y <= 0.0 {
                    return Err(format!("scale factors must stay positive over the horizon (min sx={lo_x}, min sy={lo_y})"));
                }
            }
            MapPrimitive::Warp { wavenumber, displacement, variation, .. } => {
                let e = Vec2::from(*displacement);
                let n = Vec2::from(*variation);
                if !wavenumber.is_finite() || (e.norm() - 1.0).abs() > 1e-9 || (n.norm() - 1.0).abs() > 1e-9 {
                    return Err("warp directions must be unit vectors and the wavenumber finite".into());
                }
            }
            _ => {}
        }
        Ok(())
    }
}

fn scale_matrix(axis_angle: f64, sx: f64, sy: f64) -> Mat2 {
    if axis_angle == 0.0 {
        return Mat2::new(sx, 0.0, 0.0, sy);
    }
    let q = rotation(axis_angle);
    q * Mat2::new(sx, 0.0, 0.0, sy) * q.transpose()
}

/// Composition of primitives; the first element is applied first.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ConfigurationMap {
    pub primitives: Vec<MapPrimitive>,
}

impl ConfigurationMap {
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn new(primitives: Vec<MapPrimitive>) -> Self {
        Self { primitives }
    }

    pub fn apply(&self, r: Vec2, t: f64) -> Vec2 {
        self.primitives.iter().fold(r, |acc, p| p.apply(acc, t))
    }

    pub fn jet(&self, r: Vec2, t: f64) -> MapJet {
        let mut jet = MapJet::identity(r);
        for p in &self.primitives {
            let outer = p.jet(jet.value, t);
            jet = jet.then(&outer);
        }
        jet
    }

    pub fn is_static(&self) -> bool {
        self.primitives.iter().all(MapPrimitive::is_static)
    }

    pub fn mirrored(&self) -> Self {
        Self { primitives: self.primitives.iter().map(MapPrimitive::mirrored).collect() }
    }
}
