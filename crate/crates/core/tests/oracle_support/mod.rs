//! Finite-difference oracles for boundary kinematics, shared by the oracle
//! tests and the acceptance suite.
#![allow(dead_code, clippy::neg_cmp_op_on_partial_ord)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use slidenav::obstacle::{BoundaryShape, ConfigurationMap, MapPrimitive, Obstacle, Profile};
use slidenav::Vec2;

pub const N_S: usize = 100;
pub const N_T: usize = 50;
pub const T_MAX: f64 = 10.0;
pub const H: f64 = 1e-4;
pub const REL_TOL: f64 = 1e-5;
pub const COMPOSITION_SEED: u64 = 20240607;

pub fn sin(offset: f64, amplitude: f64, frequency: f64, phase: f64) -> Profile {
    Profile::Sinusoid { offset, amplitude, frequency, phase }
}

pub fn ellipse() -> BoundaryShape {
    BoundaryShape::Ellipse { center: [0.3, -0.2], semi_x: 1.4, semi_y: 0.8, angle: 0.4 }
}

pub fn translate() -> MapPrimitive {
    MapPrimitive::Translate { dx: sin(0.5, 0.8, 1.3, 0.2), dy: Profile::Linear { offset: -1.0, rate: 0.4 } }
}

pub fn rotate() -> MapPrimitive {
    MapPrimitive::Rotate { cx: sin(0.0, 0.5, 0.7, 0.0), cy: Profile::Constant(0.4), angle: sin(0.1, 1.2, 0.9, 0.5) }
}

pub fn scale() -> MapPrimitive {
    MapPrimitive::Scale { cx: 0.2, cy: 0.1, axis_angle: 0.6, sx: sin(1.2, 0.3, 1.1, 0.0), sy: sin(0.9, 0.2, 1.7, 1.0) }
}

pub fn warp() -> MapPrimitive {
    let a = 0.8f64;
    MapPrimitive::Warp {
        amplitude: sin(0.0, 0.15, 1.4, 0.3),
        wavenumber: 1.7,
        phase: 0.4,
        displacement: [a.cos(), a.sin()],
        variation: [-(a + 1.2).sin(), (a + 1.2).cos()],
    }
}

pub fn random_profile(rng: &mut ChaCha8Rng, offset: f64, spread: f64) -> Profile {
    match rng.random_range(0..3) {
        0 => Profile::Constant(offset + spread * (rng.random::<f64>() - 0.5)),
        1 => Profile::Linear { offset, rate: spread * (rng.random::<f64>() - 0.5) * 0.2 },
        _ => sin(offset, spread * rng.random::<f64>(), 0.3 + 1.5 * rng.random::<f64>(), rng.random::<f64>() * 6.0),
    }
}

pub fn random_primitive(rng: &mut ChaCha8Rng) -> MapPrimitive {
    match rng.random_range(0..4) {
        0 => MapPrimitive::Translate { dx: random_profile(rng, 0.0, 1.0), dy: random_profile(rng, 0.0, 1.0) },
        1 => MapPrimitive::Rotate {
            cx: random_profile(rng, 0.0, 0.5),
            cy: random_profile(rng, 0.0, 0.5),
            angle: random_profile(rng, 0.0, 1.5),
        },
        2 => MapPrimitive::Scale {
            cx: rng.random::<f64>() - 0.5,
            cy: rng.random::<f64>() - 0.5,
            axis_angle: rng.random::<f64>() * 3.0,
            sx: sin(1.0, 0.2 * rng.random::<f64>(), 0.5 + rng.random::<f64>(), 0.0),
            sy: sin(1.1, 0.2 * rng.random::<f64>(), 0.5 + rng.random::<f64>(), 1.0),
        },
        _ => {
            let a = rng.random::<f64>() * 6.0;
            let b = rng.random::<f64>() * 6.0;
            MapPrimitive::Warp {
                amplitude: sin(0.0, 0.1 * rng.random::<f64>(), 0.5 + rng.random::<f64>(), 0.0),
                wavenumber: 0.5 + rng.random::<f64>(),
                phase: rng.random::<f64>(),
                displacement: [a.cos(), a.sin()],
                variation: [b.cos(), b.sin()],
            }
        }
    }
}

pub fn random_composition(seed: u64) -> Vec<MapPrimitive> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..3).map(|_| random_primitive(&mut rng)).collect()
}

pub fn grid() -> impl Iterator<Item = (f64, f64)> {
    (0..N_T).flat_map(|j| (0..N_S).map(move |i| ((i as f64 + 0.5) / N_S as f64, 0.05 + T_MAX * j as f64 / N_T as f64)))
}

/// Worst `|analytic - oracle| / max(|oracle|, floor)` over the grid, where
/// `floor` is 1% of the largest oracle magnitude: points where a field
/// vanishes are judged against its overall scale. The second difference at
/// `H` carries about `4 eps |p| / H²` (~1e-7) of rounding, which this floor
/// keeps below the tolerance.
pub fn worst_relative(pairs: &[(Vec2, Vec2)]) -> f64 {
    worst_relative_with_floor(pairs, 1e-2)
}

pub fn worst_relative_with_floor(pairs: &[(Vec2, Vec2)], floor_frac: f64) -> f64 {
    let scale = pairs.iter().map(|(_, o)| o.norm()).fold(0.0, f64::max);
    let floor = (floor_frac * scale).max(1e-12);
    pairs.iter().map(|(a, o)| (a - o).norm() / o.norm().max(floor)).fold(0.0, f64::max)
}

pub fn worst_relative_scalar(pairs: &[(f64, f64)]) -> f64 {
    let v: Vec<(Vec2, Vec2)> = pairs.iter().map(|&(a, o)| (Vec2::new(a, 0.0), Vec2::new(o, 0.0))).collect();
    worst_relative(&v)
}

pub struct Errors {
    pub velocity: f64,
    pub acceleration: f64,
    /// Against the time difference of the velocity, free of the rounding floor.
    pub acceleration_dv: f64,
    pub sigma: f64,
    pub kappa: f64,
}

pub fn oracle_errors(o: &Obstacle) -> Errors {
    let mut vel = Vec::new();
    let mut acc = Vec::new();
    let mut acc_dv = Vec::new();
    let mut sig = Vec::new();
    let mut kap = Vec::new();
    for (s, t) in grid() {
        let f = o.fields(s, t).unwrap();
        let p = |s: f64, t: f64| o.boundary_point(s, t);

        let v_fd = (p(s, t + H) - p(s, t - H)) / (2.0 * H);
        vel.push((o.eulerian_velocity(s, t), v_fd));

        let a_fd = (p(s, t + H) - 2.0 * p(s, t) + p(s, t - H)) / (H * H);
        acc.push((o.eulerian_acceleration(s, t), a_fd));
        let dv_fd = (o.eulerian_velocity(s, t + H) - o.eulerian_velocity(s, t - H)) / (2.0 * H);
        acc_dv.push((o.eulerian_acceleration(s, t), dv_fd));

        // Velocity varied along the boundary, projected on N.
        let hs = 1e-5;
        let dv = (o.eulerian_velocity(s + hs, t) - o.eulerian_velocity(s - hs, t)) / (2.0 * hs);
        let ps = (p(s + hs, t) - p(s - hs, t)) / (2.0 * hs);
        sig.push((f.sigma, dv.dot(&f.normal) / ps.norm()));

        let p1 = (p(s + H, t) - p(s - H, t)) / (2.0 * H);
        let p2 = (p(s + H, t) - 2.0 * p(s, t) + p(s - H, t)) / (H * H);
        kap.push((f.kappa, (p1.x * p2.y - p1.y * p2.x) / p1.norm().powi(3)));
    }
    Errors {
        velocity: worst_relative(&vel),
        acceleration: worst_relative(&acc),
        acceleration_dv: worst_relative_with_floor(&acc_dv, 1e-3),
        sigma: worst_relative_scalar(&sig),
        kappa: worst_relative_scalar(&kap),
    }
}

impl Errors {
    /// Fields that exceed `REL_TOL`; only curvature is checked on a static map.
    pub fn failures(&self, moving: bool) -> Vec<(&'static str, f64)> {
        let mut checks = vec![("kappa", self.kappa)];
        if moving {
            checks.extend([
                ("velocity", self.velocity),
                ("acceleration", self.acceleration),
                ("acceleration (velocity difference)", self.acceleration_dv),
                ("sigma", self.sigma),
            ]);
        }
        checks.into_iter().filter(|(_, e)| !(*e < REL_TOL)).collect()
    }

    pub fn max(&self) -> f64 {
        [self.velocity, self.acceleration, self.acceleration_dv, self.sigma, self.kappa].into_iter().fold(0.0, f64::max)
    }
}

pub fn assert_oracles(name: &str, o: &Obstacle) {
    let e = oracle_errors(o);
    let failures = e.failures(!o.is_static());
    assert!(failures.is_empty(), "{name}: {failures:?}");
}

/// Every map primitive on the ellipse, then one seeded random composition.
pub fn primitive_cases() -> Vec<(String, Obstacle)> {
    vec![
        ("translate".to_string(), obstacle(ellipse(), vec![translate()])),
        ("rotate".to_string(), obstacle(ellipse(), vec![rotate()])),
        ("scale".to_string(), obstacle(ellipse(), vec![scale()])),
        ("warp".to_string(), obstacle(ellipse(), vec![warp()])),
        (format!("random composition (seed {COMPOSITION_SEED})"), obstacle(ellipse(), random_composition(COMPOSITION_SEED))),
    ]
}

pub fn obstacle(shape: BoundaryShape, prims: Vec<MapPrimitive>) -> Obstacle {
    Obstacle::from_shape(shape, ConfigurationMap::new(prims)).unwrap()
}
