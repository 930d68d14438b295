//! Closed reference boundary curves `c(s)`, `s ∈ [0, 1)`, oriented with the
//! domain on the left.

use std::f64::consts::TAU;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::ObstacleError;
use crate::Vec2;

fn left(v: Vec2) -> Vec2 {
    Vec2::new(-v.y, v.x)
}

fn cross(a: Vec2, b: Vec2) -> f64 {
    a.x * b.y - a.y * b.x
}

/// User-facing description of a reference boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundaryShape {
    Circle { center: [f64; 2], radius: f64 },
    Ellipse { center: [f64; 2], semi_x: f64, semi_y: f64, angle: f64 },
    /// Polygon with every corner replaced by a circular arc of `corner_radius`.
    /// Curvature is piecewise constant, so the curve is C¹ but not C².
    RoundedPolygon { vertices: Vec<[f64; 2]>, corner_radius: f64 },
    /// Periodic interpolating cubic spline with uniform knots (C² everywhere).
    Spline { points: Vec<[f64; 2]> },
}

impl BoundaryShape {
    /// Reflection across the x-axis, re-oriented so the domain stays on the left.
    pub fn mirrored(&self) -> BoundaryShape {
        let flip = |p: &[f64; 2]| [p[0], -p[1]];
        match self {
            BoundaryShape::Circle { center, radius } => BoundaryShape::Circle { center: flip(center), radius: *radius },
            BoundaryShape::Ellipse { center, semi_x, semi_y, angle } => BoundaryShape::Ellipse {
                center: flip(center),
                semi_x: *semi_x,
                semi_y: *semi_y,
                angle: -angle,
            },
            BoundaryShape::RoundedPolygon { vertices, corner_radius } => BoundaryShape::RoundedPolygon {
                vertices: vertices.iter().rev().map(flip).collect(),
                corner_radius: *corner_radius,
            },
            BoundaryShape::Spline { points } => {
                BoundaryShape::Spline { points: points.iter().rev().map(flip).collect() }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Piece {
    Line { start: Vec2, dir: Vec2 },
    Arc { center: Vec2, radius: f64, start_heading: f64, turn_sign: f64 },
}

#[derive(Debug, Clone, PartialEq)]
enum Curve {
    Circle { center: Vec2, radius: f64 },
    Ellipse { center: Vec2, semi_x: f64, semi_y: f64, cos_a: f64, sin_a: f64 },
    Rounded { pieces: Vec<Piece>, starts: Vec<f64>, perimeter: f64 },
    Spline { points: Vec<Vec2>, second: Vec<Vec2> },
}

/// Validated reference boundary with position and first two derivatives in `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceBoundary {
    shape: BoundaryShape,
    curve: Curve,
}

impl ReferenceBoundary {
    pub fn new(shape: BoundaryShape) -> Result<Self, ObstacleError> {
        let curve = build_curve(&shape)?;
        let b = Self { shape, curve };
        b.check_simple(512)?;
        Ok(b)
    }

    pub fn circle(center: [f64; 2], radius: f64) -> Result<Self, ObstacleError> {
        Self::new(BoundaryShape::Circle { center, radius })
    }

    pub fn shape(&self) -> &BoundaryShape {
        &self.shape
    }

    pub fn point(&self, s: f64) -> Vec2 {
        self.eval(s).0
    }

    /// `(c(s), c'(s), c''(s))` with derivatives taken in `s`.
    pub fn eval(&self, s: f64) -> (Vec2, Vec2, Vec2) {
        let s = s.rem_euclid(1.0);
        match &self.curve {
            Curve::Circle { center, radius } => {
                let (sn, cs) = (TAU * s).sin_cos();
                let p = center + Vec2::new(cs, sn) * *radius;
                let d1 = Vec2::new(-sn, cs) * (TAU * radius);
                let d2 = Vec2::new(-cs, -sn) * (TAU * TAU * radius);
                (p, d1, d2)
            }
            Curve::Ellipse { center, semi_x, semi_y, cos_a, sin_a } => {
                let (sn, cs) = (TAU * s).sin_cos();
                let rot = |v: Vec2| Vec2::new(cos_a * v.x - sin_a * v.y, sin_a * v.x + cos_a * v.y);
                let p = center + rot(Vec2::new(semi_x * cs, semi_y * sn));
                let d1 = rot(Vec2::new(-semi_x * sn, semi_y * cs) * TAU);
                let d2 = rot(Vec2::new(-semi_x * cs, -semi_y * sn) * (TAU * TAU));
                (p, d1, d2)
            }
            Curve::Rounded { pieces, starts, perimeter } => {
                let arc = s * perimeter;
                let idx = match starts.binary_search_by(|x| x.partial_cmp(&arc).unwrap()) {
                    Ok(i) => i,
                    Err(i) => i - 1,
                };
                let local = arc - starts[idx];
                match &pieces[idx] {
                    Piece::Line { start, dir } => (start + dir * local, dir * *perimeter, Vec2::zeros()),
                    Piece::Arc { center, radius, start_heading, turn_sign } => {
                        let heading = start_heading + turn_sign * local / radius;
                        let (sn, cs) = heading.sin_cos();
                        let tangent = Vec2::new(cs, sn);
                        let p = center + Vec2::new(sn, -cs) * (turn_sign * radius);
                        let d2 = left(tangent) * (perimeter * perimeter * turn_sign / radius);
                        (p, tangent * *perimeter, d2)
                    }
                }
            }
            Curve::Spline { points, second } => {
                let n = points.len();
                let u = s * n as f64;
                let i = (u.floor() as usize).min(n - 1);
                let tau = u - i as f64;
                let j = (i + 1) % n;
                let (p0, p1, m0, m1) = (points[i], points[j], second[i], second[j]);
                let a = 1.0 - tau;
                let p = p0 * a + p1 * tau + m0 * ((a * a * a - a) / 6.0) + m1 * ((tau * tau * tau - tau) / 6.0);
                let d1 = p1 - p0 + m0 * ((1.0 - 3.0 * a * a) / 6.0) + m1 * ((3.0 * tau * tau - 1.0) / 6.0);
                let d2 = m0 * a + m1 * tau;
                let nf = n as f64;
                (p, d1 * nf, d2 * (nf * nf))
            }
        }
    }

    /// Signed area enclosed by a dense polyline sample (positive when the
    /// domain lies to the left).
    pub fn signed_area(&self, samples: usize) -> f64 {
        let pts: Vec<Vec2> = (0..samples).map(|i| self.point(i as f64 / samples as f64)).collect();
        polygon_area(&pts)
    }

    fn check_simple(&self, samples: usize) -> Result<(), ObstacleError> {
        let pts: Vec<Vec2> = (0..samples).map(|i| self.point(i as f64 / samples as f64)).collect();
        if let Some((i, j)) = first_self_intersection(&pts) {
            return Err(ObstacleError::InvalidBoundary(format!(
                "boundary is not simple: samples {i} and {j} cross"
            )));
        }
        Ok(())
    }
}

pub(crate) fn polygon_area(pts: &[Vec2]) -> f64 {
    let n = pts.len();
    0.5 * (0..n).map(|i| cross(pts[i], pts[(i + 1) % n])).sum::<f64>()
}

/// First pair of non-adjacent segments of a closed polyline that intersect.
pub(crate) fn first_self_intersection(pts: &[Vec2]) -> Option<(usize, usize)> {
    let n = pts.len();
    let seg = |i: usize| (pts[i], pts[(i + 1) % n]);
    // Bounding boxes prune almost every pair.
    let boxes: Vec<(Vec2, Vec2)> = (0..n)
        .map(|i| {
            let (a, b) = seg(i);
            (Vec2::new(a.x.min(b.x), a.y.min(b.y)), Vec2::new(a.x.max(b.x), a.y.max(b.y)))
        })
        .collect();
    for i in 0..n {
        for j in (i + 2)..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            let (lo_i, hi_i) = boxes[i];
            let (lo_j, hi_j) = boxes[j];
            if lo_i.x > hi_j.x || lo_j.x > hi_i.x || lo_i.y > hi_j.y || lo_j.y > hi_i.y {
                continue;
            }
            let (a, b) = seg(i);
            let (c, d) = seg(j);
            if segments_cross(a, b, c, d) {
                return Some((i, j));
            }
        }
    }
    None
}

fn segments_cross(a: Vec2, b: Vec2, c: Vec2, d: Vec2) -> bool {
    let d1 = cross(b - a, c - a);
    let d2 = cross(b - a, d - a);
    let d3 = cross(d - c, a - c);
    let d4 = cross(d - c, b - c);
    // Touching counts: a figure-eight may cross exactly at a sample.
    d1 * d2 <= 0.0 && d3 * d4 <= 0.0
}

fn build_curve(shape: &BoundaryShape) -> Result<Curve, ObstacleError> {
    let bad = |msg: String| Err(ObstacleError::InvalidBoundary(msg));
    match shape {
        BoundaryShape::Circle { center, radius } => {
            if !(*radius > 0.0) {
                return bad(format!("circle radius must be positive, got {radius}"));
            }
            Ok(Curve::Circle { center: Vec2::from(*center), radius: *radius })
        }
        BoundaryShape::Ellipse { center, semi_x, semi_y, angle } => {
            if !(*semi_x > 0.0 && *semi_y > 0.0) {
                return bad(format!("ellipse semi-axes must be positive, got {semi_x}, {semi_y}"));
            }
            let (sin_a, cos_a) = angle.sin_cos();
            Ok(Curve::Ellipse { center: Vec2::from(*center), semi_x: *semi_x, semi_y: *semi_y, cos_a, sin_a })
        }
        BoundaryShape::RoundedPolygon { vertices, corner_radius } => {
            build_rounded(vertices, *corner_radius)
        }
        BoundaryShape::Spline { points } => build_spline(points),
    }
}

fn oriented(points: &[[f64; 2]]) -> Vec<Vec2> {
    let mut pts: Vec<Vec2> = points.iter().map(|p| Vec2::from(*p)).collect();
    if polygon_area(&pts) < 0.0 {
        pts.reverse();
    }
    pts
}

fn build_rounded(vertices: &[[f64; 2]], radius: f64) -> Result<Curve, ObstacleError> {
    let bad = |msg: String| Err(ObstacleError::InvalidBoundary(msg));
    if vertices.len() < 3 {
        return bad("rounded polygon needs at least three vertices".into());
    }
    if !(radius > 0.0) {
        return bad(format!("corner radius must be positive, got {radius}"));
    }
    let pts = oriented(vertices);
    if first_self_intersection(&pts).is_some() {
        return bad("polygon is not simple".into());
    }
    let n = pts.len();
    let dirs: Vec<Vec2> = (0..n).map(|i| (pts[(i + 1) % n] - pts[i]).normalize()).collect();
    let lens: Vec<f64> = (0..n).map(|i| (pts[(i + 1) % n] - pts[i]).norm()).collect();
    // Corner i sits at pts[i] between edge i-1 (incoming) and edge i.
    let mut turn = vec![0.0; n];
    let mut cut = vec![0.0; n];
    for i in 0..n {
        let d_in = dirs[(i + n - 1) % n];
        let d_out = dirs[i];
        turn[i] = cross(d_in, d_out).atan2(d_in.dot(&d_out));
        cut[i] = radius * (0.5 * turn[i].abs()).tan();
    }
    for i in 0..n {
        if cut[i] + cut[(i + 1) % n] > lens[i] + 1e-12 {
            return bad(format!("corner radius {radius} too large for edge {i} of length {}", lens[i]));
        }
    }
    let mut pieces = Vec::with_capacity(2 * n);
    let mut starts = Vec::with_capacity(2 * n);
    let mut acc = 0.0;
    for i in 0..n {
        let d_in = dirs[(i + n - 1) % n];
        let sign = turn[i].signum();
        if turn[i] != 0.0 {
            let arc_start = pts[i] - d_in * cut[i];
            let center = arc_start + left(d_in) * (sign * radius);
            starts.push(acc);
            pieces.push(Piece::Arc { center, radius, start_heading: d_in.y.atan2(d_in.x), turn_sign: sign });
            acc += radius * turn[i].abs();
        }
        let line_len = lens[i] - cut[i] - cut[(i + 1) % n];
        if line_len > 0.0 {
            starts.push(acc);
            pieces.push(Piece::Line { start: pts[i] + dirs[i] * cut[i], dir: dirs[i] });
            acc += line_len;
        }
    }
    Ok(Curve::Rounded { pieces, starts, perimeter: acc })
}

fn build_spline(points: &[[f64; 2]]) -> Result<Curve, ObstacleError> {
    if points.len() < 4 {
        return Err(ObstacleError::InvalidBoundary("spline needs at least four control points".into()));
    }
    let pts = oriented(points);
    let n = pts.len();
    // Periodic system M_{i-1} + 4 M_i + M_{i+1} = 6 (P_{i+1} - 2 P_i + P_{i-1}).
    let mut a = DMatrix::<f64>::zeros(n, n);
    let mut rhs = DMatrix::<f64>::zeros(n, 2);
    for i in 0..n {
        a[(i, i)] += 4.0;
        a[(i, (i + 1) % n)] += 1.0;
        a[(i, (i + n - 1) % n)] += 1.0;
        let r = (pts[(i + 1) % n] - pts[i] * 2.0 + pts[(i + n - 1) % n]) * 6.0;
        rhs[(i, 0)] = r.x;
        rhs[(i, 1)] = r.y;
    }
    let sol = a
        .lu()
        .solve(&rhs)
        .ok_or_else(|| ObstacleError::InvalidBoundary("singular spline system".into()))?;
    let second = (0..n).map(|i| Vec2::new(sol[(i, 0)], sol[(i, 1)])).collect();
    Ok(Curve::Spline { points: pts, second })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn kidney() -> BoundaryShape {
        // Bean shape with a dent on the top side.
        let pts: Vec<[f64; 2]> = (0..16)
            .map(|i| {
                let a = TAU * i as f64 / 16.0;
                let r = 1.0 - 0.45 * (a - std::f64::consts::FRAC_PI_2).cos().max(0.0).powi(2);
                [1.4 * r * a.cos(), r * a.sin()]
            })
            .collect();
        BoundaryShape::Spline { points: pts }
    }

    fn shapes() -> Vec<BoundaryShape> {
        vec![
            BoundaryShape::Circle { center: [0.5, -0.2], radius: 1.3 },
            BoundaryShape::Ellipse { center: [0.0, 1.0], semi_x: 2.0, semi_y: 1.0, angle: 0.4 },
            BoundaryShape::RoundedPolygon {
                vertices: vec![[0.0, 0.0], [2.0, 0.0], [2.0, 1.0], [1.0, 0.6], [0.0, 1.0]],
                corner_radius: 0.15,
            },
            kidney(),
        ]
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let h = 1e-6;
        for shape in shapes() {
            let b = ReferenceBoundary::new(shape.clone()).unwrap();
            for i in 0..97 {
                let s = (i as f64 + 0.37) / 97.0;
                let (_, d1, d2) = b.eval(s);
                let fd1 = (b.point(s + h) - b.point(s - h)) / (2.0 * h);
                let scale = d1.norm();
                assert!((d1 - fd1).norm() < 1e-6 * scale, "{shape:?} at {s}");
                let h2 = 1e-4;
                let fd2 = (b.eval(s + h2).1 - b.eval(s - h2).1) / (2.0 * h2);
                // Rounded polygons have curvature jumps and spline knots have
                // third-derivative jumps; skip stencils straddling them.
                let near_knot = matches!(shape, BoundaryShape::Spline { .. })
                    && ((s * 16.0).round() - s * 16.0).abs() < 16.0 * 2.0 * h2;
                if (d2 - fd2).norm() > 1e-4 * scale * scale && !near_knot {
                    assert!(matches!(shape, BoundaryShape::RoundedPolygon { .. }), "{shape:?} at {s}");
                }
            }
        }
    }

    #[test]
    fn all_shapes_are_counter_clockwise_and_closed() {
        for shape in shapes() {
            let b = ReferenceBoundary::new(shape).unwrap();
            assert!(b.signed_area(400) > 0.0);
            let (p0, d0, _) = b.eval(0.0);
            let (p1, d1, _) = b.eval(1.0 - 1e-12);
            assert!((p0 - p1).norm() < 1e-9);
            assert!((d0 - d1).norm() < 1e-6 * d0.norm());
        }
    }

    #[test]
    fn spline_is_c2_at_every_knot() {
        let b = ReferenceBoundary::new(kidney()).unwrap();
        for k in 0..16 {
            let s = k as f64 / 16.0;
            let (_, d1a, d2a) = b.eval(s - 1e-12);
            let (_, d1b, d2b) = b.eval(s + 1e-12);
            assert!((d1a - d1b).norm() < 1e-6);
            assert!((d2a - d2b).norm() < 1e-5 * d2a.norm().max(1.0));
        }
    }

    #[test]
    fn clockwise_input_is_reoriented() {
        let ccw = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        let mut cw = ccw.clone();
        cw.reverse();
        let b = ReferenceBoundary::new(BoundaryShape::RoundedPolygon { vertices: cw, corner_radius: 0.1 }).unwrap();
        assert!(b.signed_area(200) > 0.0);
    }

    #[test]
    fn rejects_self_intersecting_and_bad_parameters() {
        let bow = vec![[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]];
        assert!(ReferenceBoundary::new(BoundaryShape::Spline { points: bow.clone() }).is_err());
        assert!(ReferenceBoundary::new(BoundaryShape::RoundedPolygon { vertices: bow, corner_radius: 0.05 }).is_err());
        assert!(ReferenceBoundary::circle([0.0, 0.0], 0.0).is_err());
        let tri = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        assert!(ReferenceBoundary::new(BoundaryShape::RoundedPolygon { vertices: tri, corner_radius: 5.0 }).is_err());
    }

    #[test]
    fn rounded_polygon_arc_curvature() {
        let b = ReferenceBoundary::new(BoundaryShape::RoundedPolygon {
            vertices: vec![[0.0, 0.0], [2.0, 0.0], [2.0, 2.0], [0.0, 2.0]],
            corner_radius: 0.25,
        })
        .unwrap();
        // The first piece is the arc at vertex 0.
        let (_, d1, d2) = b.eval(0.001);
        let kappa = cross(d1, d2) / d1.norm().powi(3);
        assert_abs_diff_eq!(kappa, 4.0, epsilon = 1e-9);
    }

    #[test]
    fn mirrored_shape_reflects_points() {
        for shape in shapes() {
            let b = ReferenceBoundary::new(shape.clone()).unwrap();
            let m = ReferenceBoundary::new(shape.mirrored()).unwrap();
            assert!(m.signed_area(300) > 0.0);
            assert_abs_diff_eq!(b.signed_area(600), m.signed_area(600), epsilon = 1e-6);
        }
    }
}
